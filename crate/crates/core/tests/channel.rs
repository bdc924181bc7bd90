use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rismask_core::channel::*;
use rismask_core::C64;

fn unit_vec(phases: &[f64]) -> Vec<C64> {
    phases.iter().map(|&p| C64::from_polar(1.0, p)).collect()
}

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| C64::new(a, b)), len)
}

fn small_geometry(k: usize, n: usize) -> ScenarioGeometry {
    let mut g = ScenarioGeometry::default_scenario();
    g.k = k;
    g.n = n;
    g.pathloss_comm = vec![1e-3; k];
    g.pathloss_sense = vec![2e-3; k];
    g.fill_grid();
    g
}

proptest! {
    #[test]
    fn steering_is_unit_modulus_and_mirror_conjugate(angle in -1.5..1.5f64, count in 1usize..20, spacing in 0.1..1.0f64) {
        let v = steering_vector(angle, count, spacing).unwrap();
        let mirror = steering_vector(-angle, count, spacing).unwrap();
        for (a, b) in v.iter().zip(&mirror) {
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
            prop_assert!((a.conj() - b).norm() < 1e-12);
        }
        prop_assert!((v[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn common_phase_rotation_leaves_powers_unchanged(
        phases in prop::collection::vec(0.0..2.0 * PI, 2 * 6),
        rot in 0.0..2.0 * PI,
    ) {
        let g = small_geometry(2, 6);
        let rows = effective_channels(&g, &tx_ris_channel(&g).unwrap()).unwrap();
        let phis = [unit_vec(&phases[..6]), unit_vec(&phases[6..])];
        let turned: Vec<Vec<C64>> = phis.iter().map(|p| p.iter().map(|z| z * C64::from_polar(1.0, rot)).collect()).collect();
        let a = comm_snr(&rows, &[&phis[0], &phis[1]], 0.1, 1e-11, 3).unwrap();
        let b = comm_snr(&rows, &[&turned[0], &turned[1]], 0.1, 1e-11, 3).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        let pa = sensing_power(&rows.h_sense_eff[0], &phis[0], 0.1).unwrap();
        let pb = sensing_power(&rows.h_sense_eff[0], &turned[0], 0.1).unwrap();
        prop_assert!((pa - pb).abs() <= 1e-9 * pa.max(1e-30));
    }

    #[test]
    fn row_response_is_conjugate_linear(h in complex_vec(5), phi in complex_vec(5), c in (-2.0..2.0f64, -2.0..2.0f64)) {
        let c = C64::new(c.0, c.1);
        let scaled_phi: Vec<C64> = phi.iter().map(|z| z * c).collect();
        let scaled_h: Vec<C64> = h.iter().map(|z| z * c).collect();
        let r = row_response(&h, &phi);
        prop_assert!((row_response(&h, &scaled_phi) - c * r).norm() < 1e-10);
        prop_assert!((row_response(&scaled_h, &phi) - c.conj() * r).norm() < 1e-10);
    }

    #[test]
    fn sensing_csi_scales_with_all_paths(
        phases in prop::collection::vec(0.0..2.0 * PI, 2 * 4),
        gains in complex_vec(2),
        stat in complex_vec(2 * 3 * 4),
        c in (-2.0..2.0f64, -2.0..2.0f64),
    ) {
        let mut g = small_geometry(2, 4);
        g.m_sense = 3;
        let h = tx_ris_channel(&g).unwrap();
        let phis = [unit_vec(&phases[..4]), unit_vec(&phases[4..])];
        let sel: Vec<&[C64]> = phis.iter().map(|p| p.as_slice()).collect();
        let statics: Vec<DMatrix<C64>> = stat.chunks(12).map(|s| DMatrix::from_row_slice(3, 4, s)).collect();
        let c = C64::new(c.0, c.1);
        let base = aggregate_sensing_csi(&g, &h, &sel, &gains, &statics).unwrap();
        let gains_c: Vec<C64> = gains.iter().map(|z| z * c).collect();
        let statics_c: Vec<DMatrix<C64>> = statics.iter().map(|m| m * c).collect();
        let scaled = aggregate_sensing_csi(&g, &h, &sel, &gains_c, &statics_c).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((a * c - b).norm() <= 1e-9 * (1.0 + a.norm()));
        }
    }
}

#[test]
fn tx_channel_follows_free_space_law() {
    let g = small_geometry(3, 5);
    let h = tx_ris_channel(&g).unwrap();
    let lambda = SPEED_OF_LIGHT / g.carrier_freq;
    for k in 0..3 {
        for n in 0..5 {
            let p = g.ris_element_positions[k * 5 + n];
            let d = ((p[0] - g.tx_position[0]).powi(2) + (p[1] - g.tx_position[1]).powi(2) + (p[2] - g.tx_position[2]).powi(2)).sqrt();
            let expected = C64::from_polar(lambda / (4.0 * PI * d), -2.0 * PI * d / lambda);
            assert!((h[k][n] - expected).norm() < 1e-12 * expected.norm().max(1e-30) + 1e-15);
        }
    }
}

#[test]
fn effective_channels_match_direct_construction() {
    let g = ScenarioGeometry::default_scenario();
    let h = tx_ris_channel(&g).unwrap();
    let rows = effective_channels(&g, &h).unwrap();
    let phase = |angle: f64, n: usize| C64::from_polar(1.0, PI * angle.sin() * n as f64);
    for k in 0..g.k {
        for n in 0..g.n {
            let comm = g.pathloss_comm[k] * phase(g.theta_comm_aod, n) * h[k][n].conj();
            let sense = phase(g.theta_sense_aod, n) * h[k][n].conj();
            assert!((rows.h_comm_eff[k][n] - comm).norm() < 1e-18);
            assert!((rows.h_sense_eff[k][n] - sense).norm() < 1e-15);
        }
    }
}

#[test]
fn sensing_aligned_vector_maximizes_row_power() {
    let g = ScenarioGeometry::default_scenario();
    let rows = effective_channels(&g, &tx_ris_channel(&g).unwrap()).unwrap();
    let hs = &rows.h_sense_eff[2];
    let aligned: Vec<C64> = hs.iter().map(|z| C64::from_polar(1.0, z.arg())).collect();
    let best = sensing_power(hs, &aligned, 1.0).unwrap();
    let coherent: f64 = hs.iter().map(|z| z.norm()).sum::<f64>().powi(2);
    assert!((best - coherent).abs() < 1e-12 * coherent);
    let flipped: Vec<C64> = aligned.iter().map(|z| -z).collect();
    assert!((sensing_power(hs, &flipped, 1.0).unwrap() - best).abs() < 1e-12 * best);
}

#[test]
fn comm_snr_rejects_bad_inputs() {
    let g = small_geometry(2, 3);
    let rows = effective_channels(&g, &tx_ris_channel(&g).unwrap()).unwrap();
    let v = vec![C64::new(1.0, 0.0); 3];
    assert!(comm_snr(&rows, &[&v], 1.0, 1.0, 1).is_err());
    assert!(comm_snr(&rows, &[&v, &v], 1.0, 0.0, 1).is_err());
    assert!(comm_snr(&rows, &[&v, &v[..2]], 1.0, 1.0, 1).is_err());
}
