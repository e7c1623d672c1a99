//! `strike,vol_percent` smile files.
//!
//! Vols are stored in percent on disk and converted once on the way in.
//! Writing picks, for every vol, the shortest percent string that reads back
//! to the identical quote.

use std::io::{Read, Write};

use anyhow::{anyhow, bail, Context, Result};

use crate::pricing::OptionQuote;

pub const HEADER: [&str; 2] = ["strike", "vol_percent"];

fn parse_field(raw: &str, what: &str, line: u64) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| anyhow!("line {line}: {what} {raw:?} is not a number"))?;
    if !v.is_finite() {
        bail!("line {line}: {what} {raw:?} is not finite");
    }
    Ok(v)
}

/// Parse quotes from CSV text. Errors name the offending line.
pub fn read_quotes<R: Read>(reader: R) -> Result<Vec<OptionQuote>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().context("reading header")?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        let line = header.position().map_or(1, |p| p.line());
        bail!(
            "line {line}: expected header `{}`, found `{}`",
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        );
    }

    let mut quotes: Vec<OptionQuote> = Vec::new();
    let mut prev_line = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            anyhow!("line {line}: {e}")
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            bail!("line {line}: expected 2 fields, found {}", record.len());
        }
        let strike = parse_field(&record[0], "strike", line)?;
        let pct = parse_field(&record[1], "vol_percent", line)?;
        if let Some(last) = quotes.last() {
            if strike <= last.strike {
                bail!(
                    "line {line}: strike {strike} does not exceed {} on line {prev_line}",
                    last.strike
                );
            }
        }
        let quote =
            OptionQuote::new(strike, pct / 100.0).map_err(|e| anyhow!("line {line}: {e}"))?;
        quotes.push(quote);
        prev_line = line;
    }
    if quotes.is_empty() {
        bail!("no quotes found");
    }
    Ok(quotes)
}

/// Percent figure that converts back to exactly `vol`.
///
/// Every vol read from a percent file has one; other vols fall back to
/// `vol·100` and may read back one ulp off.
pub fn vol_to_percent(vol: f64) -> f64 {
    let mut lo = vol * 100.0;
    let mut hi = lo;
    for _ in 0..64 {
        if lo / 100.0 == vol {
            return lo;
        }
        if hi / 100.0 == vol {
            return hi;
        }
        lo = lo.next_down();
        hi = hi.next_up();
    }
    vol * 100.0
}

/// Write quotes back as CSV with shortest round-trip decimals.
pub fn write_quotes<W: Write>(writer: W, quotes: &[OptionQuote]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for q in quotes {
        w.write_record([q.strike.to_string(), vol_to_percent(q.vol).to_string()])?;
    }
    w.flush()?;
    Ok(())
}
