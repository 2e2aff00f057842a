use std::f64::consts::PI;

use wvn_core::floquet::band_edges;
use wvn_core::model_system::model_density;
use wvn_core::potentials::ProblemConfig;
use wvn_core::resonance::{critical_alpha, resonance_points};
use wvn_core::spectral::{exponent_fit, spectral_density, Side, SpectralOptions};

fn free(c: f64) -> ProblemConfig {
    ProblemConfig::free(1.0, c, 1.0, 0.0, 0.0).unwrap()
}

#[test]
fn config_round_trips_through_text() {
    let text = "[periodic]\na = 6.283185307179586\nfourier_cos = [0.0, 2.0]\n\n[wvn]\nc = 0.3\nomega = 0.3\n\n[boundary]\nalpha = 0.5\n";
    let cfg = ProblemConfig::parse(text, None).unwrap();
    assert_eq!(ProblemConfig::parse(&cfg.to_toml(), None).unwrap(), cfg);
    assert!((cfg.evaluate_total(0.0) - 2.0).abs() < 1e-15);
}

#[test]
fn free_left_exponent_is_two_beta() {
    let cfg = free(1.0);
    let bands = band_edges(&cfg.periodic, 50.0).unwrap();
    let (_, m) = resonance_points(&cfg.periodic, &bands, &cfg.wvn, 0).unwrap();
    let fit = exponent_fit(&cfg, &bands, &m, Side::Left, 5, 0.1, 1.0, &SpectralOptions::default()).unwrap();
    assert!((fit.predicted_exponent - 0.5).abs() < 1e-12);
    assert!((fit.fitted_exponent - 0.5).abs() < 0.05, "p = {}", fit.fitted_exponent);
    assert!(fit.samples.iter().all(|s| s.converged));
}

#[test]
fn channels_agree_and_density_grows_with_distance() {
    let cfg = free(1.0);
    let bands = band_edges(&cfg.periodic, 50.0).unwrap();
    let (_, m) = resonance_points(&cfg.periodic, &bands, &cfg.wvn, 0).unwrap();
    let opts = SpectralOptions::default();
    let near = spectral_density(&cfg, &bands, 1.02, &opts).unwrap();
    let far = spectral_density(&cfg, &bands, 1.2, &opts).unwrap();
    assert!(near.rho_prime < far.rho_prime);
    let model = model_density(&cfg, &bands, &m, 1.2, &Default::default()).unwrap();
    assert!((model.rho_prime - far.rho_prime).abs() <= 3.0 * (model.rho_error + far.rho_error));
}

#[test]
fn fit_rejects_the_critical_angle() {
    let cfg = free(1.0);
    let bands = band_edges(&cfg.periodic, 50.0).unwrap();
    let (_, mut m) = resonance_points(&cfg.periodic, &bands, &cfg.wvn, 0).unwrap();
    let acr = critical_alpha(&cfg, &bands, &m).unwrap();
    assert!((0.0..PI).contains(&acr));
    m.alpha_cr = Some(acr);
    let at_cr = cfg.with_alpha(acr).unwrap();
    assert!(exponent_fit(&at_cr, &bands, &m, Side::Right, 5, 0.1, 1.0, &SpectralOptions::default()).is_err());
}
