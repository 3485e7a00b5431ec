use num_complex::Complex;
use proptest::prelude::*;

use twinsim::analysis::{fit_dip, optimize_attenuation};
use twinsim::detection::{measure_noise, run_scan, SlitParams};
use twinsim::lattice::{check_physicality, symplectic_eigenvalues, Beam, Beams, FieldState, Grid1D, Profile};
use twinsim::mc::{mc_noise, McConfig};
use twinsim::source::{build_twin_beams, closed_form_noise, SourceParams};

const N: usize = 12;

fn squeezed(g: f64) -> FieldState<f64> {
    let grid = Grid1D::centered(N, 1.0).unwrap();
    build_twin_beams(grid, &SourceParams::uniform(g, 3.0)).unwrap()
}

#[derive(Debug, Clone)]
enum Op {
    Loss(bool, Vec<f64>),
    Phase(bool, Vec<f64>),
    Split(bool, usize, f64),
}

fn beam(probe: bool) -> Beam {
    if probe {
        Beam::Probe
    } else {
        Beam::Conj
    }
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (any::<bool>(), prop::collection::vec(0.0..=1.0f64, N)).prop_map(|(b, e)| Op::Loss(b, e)),
        (any::<bool>(), prop::collection::vec(-3.2..3.2f64, N)).prop_map(|(b, t)| Op::Phase(b, t)),
        (any::<bool>(), 0..N - 1, -1.6..1.6f64).prop_map(|(b, i, a)| Op::Split(b, i, a)),
    ]
}

fn apply(s: FieldState<f64>, op: &Op) -> FieldState<f64> {
    match op {
        Op::Loss(b, e) => s.apply_loss(Beams::from(beam(*b)), &Profile::PerPixel(e.clone())),
        Op::Phase(b, t) => s.apply_phase(Beams::from(beam(*b)), &Profile::PerPixel(t.clone())),
        Op::Split(b, i, a) => s.apply_beamsplitter(beam(*b), *i, *i + 1, *a),
    }
    .unwrap()
}

fn max_abs_diff(a: &FieldState<f64>, b: &FieldState<f64>) -> f64 {
    let mut d = (a.cov() - b.cov()).amax();
    for beam in [Beam::Probe, Beam::Conj] {
        for (x, y) in a.mean(beam).iter().zip(b.mean(beam)) {
            d = d.max((x - y).norm());
        }
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn channels_keep_states_physical(g in 1.01..2.5f64, ops in prop::collection::vec(op(), 1..8)) {
        let mut s = squeezed(g);
        for o in &ops {
            s = apply(s, o);
            let p = check_physicality(&s).unwrap();
            prop_assert!(p.nu_min >= 1.0 - 1e-9, "nu_min {} after {:?}", p.nu_min, o);
        }
    }

    #[test]
    fn lossless_compositions_stay_pure(
        g in 1.01..2.5f64,
        ops in prop::collection::vec(op().prop_filter("lossless", |o| !matches!(o, Op::Loss(..))), 1..8),
    ) {
        let mut s = squeezed(g);
        for o in &ops {
            s = apply(s, o);
        }
        // the engine stores [Xp, Pp, Xc, Pc]; the spectrum wants all x then all p
        let idx: Vec<usize> = (0..N).chain(2 * N..3 * N).chain(N..2 * N).chain(3 * N..4 * N).collect();
        let cov = nalgebra::DMatrix::from_fn(4 * N, 4 * N, |r, c| s.cov()[(idx[r], idx[c])]);
        for nu in symplectic_eigenvalues(&cov).unwrap() {
            prop_assert!((nu - 1.0).abs() < 1e-9, "nu {}", nu);
        }
    }

    #[test]
    fn unit_loss_and_zero_phase_are_identities(g in 1.01..2.5f64, probe in any::<bool>()) {
        let s = squeezed(g);
        let b = Beams::from(beam(probe));
        let l = s.clone().apply_loss(b, &Profile::Uniform(1.0)).unwrap();
        let p = s.clone().apply_phase(b, &Profile::Uniform(0.0)).unwrap();
        prop_assert!(max_abs_diff(&s, &l) < 1e-12);
        prop_assert!(max_abs_diff(&s, &p) < 1e-12);
    }

    #[test]
    fn pixel_disjoint_channels_commute(
        g in 1.01..2.5f64,
        eta in 0.0..=1.0f64,
        theta in -3.2..3.2f64,
        angle in -1.6..1.6f64,
    ) {
        // loss on pixels 0..4 of the probe, phase on 4..8, splitter on 9,10
        let mut loss = vec![1.0; N];
        loss[..4].iter_mut().for_each(|e| *e = eta);
        let mut phase = vec![0.0; N];
        phase[4..8].iter_mut().for_each(|t| *t = theta);
        let ops = [
            Op::Loss(true, loss),
            Op::Phase(true, phase),
            Op::Split(true, 9, angle),
        ];
        let s = squeezed(g);
        let forward = ops.iter().fold(s.clone(), apply);
        let backward = ops.iter().rev().fold(s, apply);
        prop_assert!(max_abs_diff(&forward, &backward) < 1e-10);
    }

    #[test]
    fn coherent_light_sits_at_qnl(
        amp in prop::collection::vec((0.1..10.0f64, -3.2..3.2f64), N),
        cp in -6.0..6.0f64,
        cc in -6.0..6.0f64,
        w in 1.0..12.0f64,
    ) {
        let grid = Grid1D::centered(N, 1.0).unwrap();
        let mean: Vec<Complex<f64>> = amp.iter().map(|&(r, t)| Complex::from_polar(r, t)).collect();
        let cov = nalgebra::DMatrix::identity(4 * N, 4 * N);
        let s = FieldState::from_parts(grid, mean.clone(), mean, cov).unwrap();
        let r = measure_noise(&s, &SlitParams::new(cp, w), &SlitParams::new(cc, w)).unwrap();
        prop_assert!((r.v_rel - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_beam_matches_closed_form(g in 1.01..3.0f64, p in 0.01..=1.0f64, c in 0.01..=1.0f64) {
        let s = squeezed(g)
            .apply_loss(Beams::from(Beam::Probe), &Profile::Uniform(p)).unwrap()
            .apply_loss(Beams::from(Beam::Conj), &Profile::Uniform(c)).unwrap();
        let full = SlitParams::full_beam(s.grid());
        let v = measure_noise(&s, &full, &full).unwrap().v_rel;
        let f = closed_form_noise(g, p, c).unwrap();
        prop_assert!(((v - f) / f).abs() < 1e-6);
    }

    #[test]
    fn optimum_is_a_true_minimum(g in 1.05..3.0f64, p in 0.05..=1.0f64, cmax in 0.05..=1.0f64) {
        let o = optimize_attenuation(g, p, cmax).unwrap();
        let v = |a: f64| closed_form_noise(g, p, (a * cmax).max(1e-12)).unwrap();
        for a in [o.a_star - 1e-3, o.a_star + 1e-3] {
            if (0.0..=1.0).contains(&a) {
                prop_assert!(v(a) >= o.v_min - 1e-9);
            }
        }
    }

    #[test]
    fn dip_fit_is_translation_equivariant(shift in -500.0..500.0f64, sigma in 20.0..80.0f64) {
        let x: Vec<f64> = (-40..=40).map(|k| k as f64 * 5.0).collect();
        let y: Vec<f64> = x.iter().map(|&x| 1.0 - 1.5 * (-(x - 7.0).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
        let xs: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let a = fit_dip(&x, &y).unwrap();
        let b = fit_dip(&xs, &y).unwrap();
        prop_assert!((b.center - a.center - shift).abs() < 1e-6);
        prop_assert!((b.sigma - a.sigma).abs() < 1e-6);
    }
}

#[test]
fn uniform_source_noise_depends_only_on_separation() {
    let grid = Grid1D::centered(96, 4.0).unwrap();
    let s = build_twin_beams(grid, &SourceParams::uniform(1.5, 48.0)).unwrap();
    let pos: Vec<f64> = (-3..=3).map(|k| k as f64 * 48.0 + 24.0).collect();
    let scan = run_scan(&s, 48.0, &pos, &pos).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..pos.len() {
        for j in 0..pos.len() {
            if i + 1 < pos.len() && j + 1 < pos.len() {
                let a = scan.noise_db[i][j];
                let b = scan.noise_db[i + 1][j + 1];
                worst = worst.max((a - b).abs());
            }
        }
    }
    assert!(worst < 1e-8, "max deviation {worst:e} dB");
}

#[test]
fn monte_carlo_agrees_over_thirty_scenarios() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let cfg = McConfig {
        n_samples: 100_000,
        rng_seed: 3,
        ..McConfig::default()
    };
    let mut beyond = 0;
    for _ in 0..30 {
        let g = rng.random_range(1.05..2.5);
        let s = squeezed(g)
            .apply_loss(Beams::from(Beam::Probe), &Profile::Uniform(rng.random_range(0.1..1.0)))
            .unwrap()
            .apply_phase(Beams::from(Beam::Conj), &Profile::PerPixel((0..N).map(|_| rng.random_range(-0.3..0.3)).collect()))
            .unwrap();
        let w = rng.random_range(2.0..12.0);
        let sp = SlitParams::new(rng.random_range(-3.0..3.0), w);
        let sc = SlitParams::new(rng.random_range(-3.0..3.0), w);
        let v = measure_noise(&s, &sp, &sc).unwrap().v_rel;
        let e = mc_noise(&s, &sp, &sc, &cfg).unwrap();
        if (e.v_rel_estimate - v).abs() > 3.0 * e.std_error {
            beyond += 1;
        }
    }
    // each scenario passes with probability ~0.997; allow one outlier in thirty
    assert!(beyond <= 1, "{beyond} scenarios beyond 3 standard errors");
}

#[test]
fn single_precision_baseline() {
    let grid = Grid1D::<f32>::centered(64, 4.0).unwrap();
    let s = build_twin_beams(grid, &SourceParams::<f32>::uniform(1.5, 16.0)).unwrap();
    let full = SlitParams::full_beam(s.grid());
    let r = measure_noise(&s, &full, &full).unwrap();
    assert!((r.db + 3.0103).abs() < 1e-3, "{}", r.db);
    let p = check_physicality(&s).unwrap();
    assert!(p.ok);
    let f = closed_form_noise(1.5f32, 1.0, 1.0).unwrap();
    assert!((r.v_rel - f).abs() < 1e-3);
}
