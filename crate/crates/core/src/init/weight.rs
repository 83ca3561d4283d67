use super::config::ParallaxWeightConfig;

/// Sigmoid-shaped visual weight that grows as parallax shrinks:
/// `w_max / (1 + exp(P - P_min)) + w_min`.
pub fn parallax_weight(parallax_px: f64, cfg: &ParallaxWeightConfig) -> f64 {
    cfg.w_max / (1.0 + (parallax_px - cfg.p_min).exp()) + cfg.w_min
}
