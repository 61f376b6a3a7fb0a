//! Property-based tests over randomly generated coefficient vectors, paths
//! and ladders.

use proptest::prelude::*;

use sns_core::experiments::{fit_rate, ErrorMeasure, ErrorRow, ErrorTable};
use sns_core::grid_fem::{assemble_operators, build_mesh, build_spaces, FeSpaces, OperatorSet};
use sns_core::helmholtz::{is_discretely_divfree, project};
use sns_core::sparse::{inf_norm, matvec, quad_form};
use sns_core::stochastics::{generate_path, transport_matrix, Transport, TransportField, TransportIntegration};

fn setup(n: usize) -> (FeSpaces, OperatorSet) {
    let sp = build_spaces(build_mesh(n).unwrap());
    let ops = assemble_operators(&sp).unwrap();
    (sp, ops)
}

/// A pseudo-random coefficient vector from a seed (deterministic, cheap).
fn seeded_vector(len: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    (0..len)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    /// Helmholtz split: exact reconstruction, discrete divergence freeness,
    /// M-orthogonality, non-expansiveness and idempotence on random vectors.
    #[test]
    fn helmholtz_split_properties(seed in 0u64..1_000_000) {
        let (sp, ops) = setup(6);
        let v = seeded_vector(sp.n_velocity(), seed);
        let split = project(&v, &ops).unwrap();
        let vm2 = quad_form(&ops.m, &v, &v);
        // Reconstruction to one rounding per entry.
        for i in 0..v.len() {
            let r = split.solenoidal[i] + split.gradient_part[i] - v[i];
            prop_assert!(r.abs() <= f64::EPSILON * (v[i].abs() + split.gradient_part[i].abs()));
        }
        prop_assert!(is_discretely_divfree(&split.solenoidal, &ops, 1e-9));
        prop_assert!(quad_form(&ops.m, &split.solenoidal, &split.gradient_part).abs() <= 1e-9 * vm2.max(1e-30));
        let sol = quad_form(&ops.m, &split.solenoidal, &split.solenoidal).sqrt();
        prop_assert!(sol <= vm2.sqrt() * (1.0 + 1e-12) + 1e-12);
        let again = project(&split.solenoidal, &ops).unwrap();
        let grad2 = quad_form(&ops.m, &again.gradient_part, &again.gradient_part).sqrt();
        prop_assert!(grad2 <= 1e-9 * vm2.sqrt().max(1e-30));
    }

    /// Increments at any dyadic coarse level aggregate the fine increments
    /// exactly (common-random-number checksum).
    #[test]
    fn path_increment_aggregation_is_exact(seed in 0u64..1_000_000, level in 0usize..6) {
        let n_fine = 64usize;
        let n_coarse = n_fine >> level;
        let path = generate_path(seed, 3, n_fine, 1.0, &[0, 7]).unwrap();
        let coarse = path.increments_at_level(n_coarse).unwrap();
        let fine = path.increments_at_level(n_fine).unwrap();
        let ratio = n_fine / n_coarse;
        for m in 0..2 {
            for k in 0..n_coarse {
                let agg: f64 = fine[m][k * ratio..(k + 1) * ratio].iter().sum();
                // Aggregation telescopes through path values; one rounding
                // per fine addend.
                prop_assert!((coarse[m][k] - agg).abs() <= 1e-13);
            }
            let total: f64 = coarse[m].iter().sum();
            let w_end = path.values[m][n_fine];
            prop_assert!((total - w_end).abs() <= 1e-12);
        }
    }

    /// The assembled transport matrix is exactly skew for random increments,
    /// so its quadratic form vanishes to rounding.
    #[test]
    fn transport_matrix_skewness(seed in 0u64..1_000_000, dw in -3.0f64..3.0) {
        let (sp, _ops) = setup(6);
        let tr = Transport::new(TransportField::Constant { gamma: [1.0, 1.0] }, TransportIntegration::StratonovichMidpoint);
        let s = transport_matrix(&tr, &sp, &[dw]).unwrap();
        let v = seeded_vector(sp.n_velocity(), seed);
        let sv = matvec(&s, &v);
        let scale = inf_norm(&sv).max(1.0);
        prop_assert!(quad_form(&s, &v, &v).abs() <= 1e-10 * scale * v.len() as f64);
    }

    /// fit_rate recovers random synthetic slopes exactly from noiseless
    /// log-log lines.
    #[test]
    fn fit_rate_recovers_random_slopes(slope in 0.2f64..2.0, logc in -2.0f64..2.0) {
        let c = logc.exp();
        let mut table = ErrorTable::default();
        for k in 0..6 {
            let tau = 0.25 / (1u64 << k) as f64;
            table.rows.push(ErrorRow {
                scheme: "s".into(),
                tau,
                measure: ErrorMeasure::LinfTL2wL2x,
                estimate: c * tau.powf(slope),
                stderr: 0.0,
                samples: 1,
            });
        }
        let fit = fit_rate(&table, "s", &ErrorMeasure::LinfTL2wL2x).unwrap();
        prop_assert!((fit.slope - slope).abs() <= 1e-9, "slope {} vs {}", fit.slope, slope);
        prop_assert!((fit.intercept - logc).abs() <= 1e-9);
    }
}
