#![allow(dead_code)]

use svi_guard::calibration::MarketSmile;
use svi_guard::cli::smile_file::read_quotes;
use svi_guard::pricing::ForwardContext;
use svi_guard::svi::SviParams;

pub const SAMPLE_SMILE_CSV: &str = include_str!("../../data/sample_smile.csv");

/// Reference fits to the bundled smile under slope caps 3.95, 1.95 and 1.00.
pub fn reference_fits() -> [SviParams; 3] {
    [
        SviParams::new(-0.152555, 2.073631, 0.195700, 0.904871, 0.729450).unwrap(),
        SviParams::new(-0.136299, 1.072730, 0.253555, 0.817793, 0.673280).unwrap(),
        SviParams::new(-0.112306, 0.596259, 0.302274, 0.677123, 0.590297).unwrap(),
    ]
}

pub fn unit_ctx() -> ForwardContext {
    ForwardContext::new(1.0, 1.0, 1.0).unwrap()
}

pub fn sample_smile() -> MarketSmile {
    MarketSmile::new(
        unit_ctx(),
        read_quotes(SAMPLE_SMILE_CSV.as_bytes()).unwrap(),
        "ACT/365",
    )
    .unwrap()
}
