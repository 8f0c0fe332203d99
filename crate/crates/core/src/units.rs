//! dB / dBm conversions used by the configuration layer.

/// Converts a power in dBm to watts.
pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Converts a power in watts to dBm.
pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1e3).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
