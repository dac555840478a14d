/// Smallest horizontal distance used by the pathloss model, meters.
pub const MIN_DISTANCE_2D: f64 = 1.0;

/// Urban-macro NLOS pathloss (3GPP TR 38.901, PL'_UMa-NLOS), dB.
///
/// `PL = 13.54 + 39.08 log10(d3D) + 20 log10(fc) - 0.6 (h_UT - 1.5)` with
/// `fc` in GHz and distances in meters. `d2d` is floored at 1 m.
pub fn pathloss_db(d2d: f64, fc_ghz: f64, h_bs: f64, h_ut: f64) -> f64 {
    let d2d = d2d.max(MIN_DISTANCE_2D);
    let dh = h_bs - h_ut;
    let d3d = (d2d * d2d + dh * dh).sqrt();
    13.54 + 39.08 * d3d.log10() + 20.0 * fc_ghz.log10() - 0.6 * (h_ut - 1.5)
}
