use proptest::prelude::*;
use tlcm_core::{
    diffusion::{ddim_step, forward_diffuse, mds_timesteps},
    distill::{cm_predict, g_transform, renoise_times, ConsistencyModel, Parameterization},
    enhance::{mps_loss, RewardModel},
    eval::{energy_distance, sliced_w2, w2_squared_1d},
    ConditionLabel, LatentBatch, Matrix, MlpModel, MlpSpec, Schedule, SegmentPlan,
};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-6.0f64..6.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v))
}

fn labels(n: usize) -> impl Strategy<Value = Vec<ConditionLabel>> {
    prop::collection::vec(prop::option::of(0u32..4), n).prop_map(|v| {
        v.into_iter()
            .map(|c| c.map_or(ConditionLabel::Null, ConditionLabel::Class))
            .collect()
    })
}

fn student(seed: u64, raw: bool) -> ConsistencyModel {
    let net = MlpModel::init(MlpSpec::denoiser(2, 4, 4, &[8], 1000.0), seed).unwrap();
    let p = if raw {
        Parameterization::RawEpsilon
    } else {
        Parameterization::Blend
    };
    ConsistencyModel::new(net, Schedule::default()).with_parameterization(p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn boundary_is_identity(z in matrix(6, 2), c in labels(6), seed in 0u64..1000, raw: bool) {
        let cm = student(seed, raw);
        let out = cm_predict(&cm, &LatentBatch::at(z.clone(), 0.0, c).unwrap()).unwrap();
        for (a, b) in out.as_slice().iter().zip(z.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn anchor_at_t_is_identity(z in matrix(4, 2), c in labels(4), t in 0.0f64..1000.0, seed in 0u64..100) {
        let cm = student(seed, false);
        let b = LatentBatch::at(z.clone(), t, c).unwrap();
        let out = g_transform(&cm, &b, &[t; 4]).unwrap();
        for (x, y) in out.as_slice().iter().zip(z.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        if t > 1.0 {
            prop_assert!(g_transform(&cm, &LatentBatch::at(z, t - 1.0, b.cond.clone()).unwrap(), &[t; 4]).is_err());
        }
    }

    #[test]
    fn blend_coefficients_bounded(t in 0.0f64..1000.0) {
        let cm = student(0, false);
        let (skip, out) = (cm.c_skip(t), cm.c_out(t));
        prop_assert!(skip > 0.0 && skip <= 1.0);
        prop_assert!((0.0..1.0).contains(&out));
        prop_assert!(cm.c_skip(t + 1.0) < skip);
    }

    #[test]
    fn ddim_zero_length_step_is_identity(z in matrix(5, 2), eps in matrix(5, 2), t in 1.0f64..1000.0) {
        let s = Schedule::default();
        let b = LatentBatch::at(z.clone(), t, vec![ConditionLabel::Null; 5]).unwrap();
        let out = ddim_step(&s, &b, &eps, &[t; 5]).unwrap();
        for (x, y) in out.z.as_slice().iter().zip(z.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn ddim_steps_compose_under_fixed_noise(z in matrix(3, 2), eps in matrix(3, 2), a in 500.0f64..1000.0, b in 200.0f64..500.0, c in 0.0f64..200.0) {
        let s = Schedule::default();
        let start = LatentBatch::at(z, a, vec![ConditionLabel::Null; 3]).unwrap();
        let mid = ddim_step(&s, &start, &eps, &[b; 3]).unwrap();
        let two = ddim_step(&s, &mid, &eps, &[c; 3]).unwrap();
        let one = ddim_step(&s, &start, &eps, &[c; 3]).unwrap();
        for (x, y) in two.z.as_slice().iter().zip(one.z.as_slice()) {
            prop_assert!((x - y).abs() < 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn ddim_inverts_forward_diffusion(x0 in matrix(4, 2), eps in matrix(4, 2), t in 1.0f64..1000.0) {
        let s = Schedule::default();
        let clean = LatentBatch::at(x0.clone(), 0.0, vec![ConditionLabel::Null; 4]).unwrap();
        let zt = forward_diffuse(&s, &clean, &[t; 4], &eps).unwrap();
        let back = ddim_step(&s, &zt, &eps, &[0.0; 4]).unwrap();
        for (x, y) in back.z.as_slice().iter().zip(x0.as_slice()) {
            prop_assert!((x - y).abs() < 1e-7 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn mds_grid_is_uniform(m_idx in 0usize..4, frac in 0.01f64..1.0, seg_pick in 0usize..1000) {
        let m = [2usize, 4, 8, 10][m_idx];
        let plan = SegmentPlan::uniform(m, 1000).unwrap();
        let s = seg_pick % m;
        let t_m = plan.floor(s) + frac * plan.width();
        let grid = mds_timesteps(&plan, t_m, s).unwrap();
        prop_assert_eq!(grid.len(), m - s + 1);
        prop_assert_eq!(grid[0], 1000.0);
        prop_assert_eq!(*grid.last().unwrap(), t_m);
        let dt = (1000.0 - t_m) / (m - s) as f64;
        for w in grid.windows(2) {
            prop_assert!((w[0] - w[1] - dt).abs() < 1e-9);
        }
    }

    #[test]
    fn renoise_times_descend_to_zero(q in 1usize..12) {
        let t = renoise_times(1000.0, q);
        prop_assert_eq!(t.len(), q);
        prop_assert!((t[0] - 1000.0 * (q - 1) as f64 / q as f64).abs() < 1e-9);
        prop_assert_eq!(*t.last().unwrap(), 0.0);
        prop_assert!(t.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn one_dim_w2_is_a_metric(a in prop::collection::vec(-5.0f64..5.0, 16), b in prop::collection::vec(-5.0f64..5.0, 16), shift in -3.0f64..3.0) {
        prop_assert!(w2_squared_1d(&a, &a) == 0.0);
        prop_assert!((w2_squared_1d(&a, &b) - w2_squared_1d(&b, &a)).abs() < 1e-12);
        prop_assert!(w2_squared_1d(&a, &b) >= 0.0);
        let moved: Vec<f64> = a.iter().map(|v| v + shift).collect();
        prop_assert!((w2_squared_1d(&a, &moved) - shift * shift).abs() < 1e-9);
    }

    #[test]
    fn sample_metrics_symmetric(a in matrix(24, 2), b in matrix(24, 2), seed in 0u64..50) {
        let ab = sliced_w2(&a, &b, 16, seed).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - sliced_w2(&b, &a, 16, seed).unwrap()).abs() < 1e-12);
        prop_assert_eq!(sliced_w2(&a, &a, 16, seed).unwrap(), 0.0);
        let e = energy_distance(&a, &b).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert!((e - energy_distance(&b, &a).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn mps_loss_nonnegative(x in matrix(6, 2), pos in prop::collection::vec(0u32..4, 6), shift in 1u32..4) {
        let r = RewardModel::new(vec![vec![4.0, 0.0], vec![0.0, 4.0], vec![-4.0, 0.0], vec![0.0, -4.0]], 2.0, 20.0).unwrap();
        let cp: Vec<ConditionLabel> = pos.iter().map(|&k| ConditionLabel::Class(k)).collect();
        let cn: Vec<ConditionLabel> = pos.iter().map(|&k| ConditionLabel::Class((k + shift) % 4)).collect();
        let (loss, grad) = mps_loss(&r, &x, &cp, &cn, 16.0).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert!(grad.is_finite());
        prop_assert!(mps_loss(&r, &x, &cp, &cp, 16.0).is_err());
    }
}
