use std::f64::consts::PI;
use std::time::Instant;

use heatbath_core::bath::{
    build_debye_bath, friction_limit_debye, memory_kernel_debye, FrequencyPlacement, MemoryKernel,
};
use heatbath_core::ehrenfest::{
    ehrenfest_force_routes, ehrenfest_step_in_place, ground_state, CVector, EhrenfestModel, EhrenfestState,
};
use heatbath_core::harness::{
    adiabatic_check, convergence_sweep, fdt_check, gibbs_consistency_test, pure_state_contrast, FdtOptions,
    ObservableSpec,
};
use heatbath_core::langevin::{
    invariant_measure_check, ou_covariance_exact, InvariantOptions, LangevinStepper, Variable,
};
use heatbath_core::quad::gauss_legendre;
use heatbath_core::rng::{StreamRng, StreamRole};
use heatbath_core::sampler::{sample_zwanzig_bath, GibbsSpec};
use heatbath_core::stats::{fit_line, CheckStatus, RunningStats};
use heatbath_core::zwanzig::{integrate, zwanzig_energy};
use heatbath_core::{ExperimentConfig, FrictionModel, FullState, HeavyModel, LangevinState, C64};
use nalgebra::{DMatrix, DVector};

type Outcome = (bool, String);

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn fdt_kernel_identity() -> Outcome {
    let bath = build_debye_bath(1000, 10.0, &scalar(1.0), 1.0, FrequencyPlacement::Stratified).unwrap();
    let opts = FdtOptions {
        draws: 20_000,
        seed: 1,
        ..Default::default()
    };
    let r = fdt_check(&bath, 0.5, &opts).unwrap();
    let worst = r.lags.iter().map(|l| l.max_z).fold(0.0, f64::max);
    (
        r.status == CheckStatus::Pass && r.lags.len() == 11,
        format!("{} lags, worst deviation {worst:.2} stderr (limit 5)", r.lags.len()),
    )
}

fn debye_point_mass_limit() -> Outcome {
    let (kappa, m, cutoff) = (scalar(1.0), 1.0, 10.0);
    let khat = friction_limit_debye(&kappa, m, cutoff).unwrap()[(0, 0)];
    let closed = PI * m / (2.0 * cutoff.powi(3));
    let integral = gauss_legendre(|t| memory_kernel_debye(&kappa, m, cutoff, t)[(0, 0)], 0.0, 1e3 / cutoff, 4000);
    let rel = (integral / khat - 1.0).abs();
    let taus: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.005).collect();
    let reference = MemoryKernel::debye(&kappa, m, cutoff, &taus);
    let gaps: Vec<f64> = [100, 1000, 10_000]
        .iter()
        .map(|&j| {
            let bath = build_debye_bath(j, cutoff, &kappa, m, FrequencyPlacement::Stratified).unwrap();
            MemoryKernel::spectral(&bath, &taus).sup_distance(&reference)
        })
        .collect();
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    (
        rel < 0.01 && (khat - closed).abs() < 1e-15 && decreasing,
        format!("integral off by {:.3}%, sup gaps {}", 100.0 * rel, sci(&gaps)),
    )
}

fn integrator_quality() -> Outcome {
    let bath = build_debye_bath(1000, 10.0, &scalar(100.0), 1.0, FrequencyPlacement::Stratified).unwrap();
    let heavy = HeavyModel::double_well(1);
    let w = sample_zwanzig_bath(&bath, &GibbsSpec::new(0.5), &mut StreamRng::new(7, 0));
    let s0 = FullState::new(DVector::from_element(1, -1.0), DVector::from_element(1, 0.3), w.amplitudes);
    let run = |h: f64, horizon: f64| {
        let n = (horizon / h).round() as usize;
        integrate(&s0, h, n, &bath, &heavy, Default::default(), |_| {}).unwrap()
    };
    let (_, rec) = run(1e-3, 100.0);
    let drift = rec.max_relative_energy_drift();

    let reference = run(1.25e-4, 10.0).0;
    let hs = [4e-3, 2e-3, 1e-3];
    let errs: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let s = run(h, 10.0).0;
            (&s.x - &reference.x).amax().max((&s.p - &reference.p).amax())
        })
        .collect();
    let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let order = fit_line(&lx, &ly, None).unwrap().slope;

    let mut reversal = Vec::new();
    for h in [2e-3f64, 1e-3] {
        let n = (10.0 / h).round() as usize;
        let (end, _) = integrate(&s0, h, n, &bath, &heavy, Default::default(), |_| {}).unwrap();
        let (back, _) = integrate(&end.time_reversed(), h, n, &bath, &heavy, Default::default(), |_| {}).unwrap();
        let back = back.time_reversed();
        let e = (&back.x - &s0.x).amax().max((&back.p - &s0.p).amax());
        reversal.push((h, e));
    }
    let reversal_ok = reversal.iter().all(|(h, e)| *e <= h * h);
    let e0 = zwanzig_energy(&s0, &bath, &heavy);
    (
        drift < 1e-4 && order >= 1.8 && reversal_ok,
        format!(
            "energy drift {drift:.2e} (E0 {e0:.3}), order {order:.2} from errors {}, reversal {}",
            sci(&errs),
            sci(&reversal.iter().map(|r| r.1).collect::<Vec<_>>())
        ),
    )
}

fn invariant_measure() -> Outcome {
    let t = 0.4;
    let heavy = HeavyModel::harmonic(1, 1.0);
    let s0 = LangevinState::new(DVector::zeros(1), DVector::zeros(1));
    let check = |friction: &FrictionModel, seed: u64| {
        let r = invariant_measure_check(
            &heavy,
            friction,
            &s0,
            0.05,
            10_000_000,
            10_000,
            &mut StreamRng::new(seed, 0),
            InvariantOptions::default(),
        )
        .unwrap();
        let x2 = r.moment(Variable::X, 0, 2).unwrap().clone();
        let p2 = r.moment(Variable::P, 0, 2).unwrap().clone();
        let within = |m: &heatbath_core::langevin::MomentCheck| {
            let e = m.estimate.unwrap();
            ((e.mean - t).abs() <= 3.0 * e.stderr, e.mean, e.stderr)
        };
        (within(&x2), within(&p2))
    };
    let fr = FrictionModel::isotropic_rate(1, 1.0, t).unwrap();
    let (x, p) = check(&fr, 1);
    let (xn, pn) = check(&fr.clone().with_diffusion_scale(0.5), 2);
    let pass = x.0 && p.0 && !(xn.0 && pn.0);
    (
        pass,
        format!(
            "<X²> {:.4}±{:.4}, <p²> {:.4}±{:.4} vs T={t}; halved diffusion <X²> {:.4}±{:.4}, <p²> {:.4}±{:.4}",
            x.1, x.2, p.1, p.2, xn.1, xn.2, pn.1, pn.2
        ),
    )
}

fn ou_oracle() -> Outcome {
    let (t_l, k, mass_ratio, h, s): (f64, f64, f64, f64, f64) = (0.6, 1.3, 1.0, 0.05, 0.25);
    let friction = FrictionModel::constant(scalar(k), t_l, mass_ratio).unwrap();
    let free = HeavyModel::free(1);
    let times = [0.5, 1.0, 2.0];
    let mut stats = vec![RunningStats::new(); 9];
    for i in 0..10_000u64 {
        let mut init = StreamRng::for_sample(3, i, StreamRole::InitialData);
        let mut noise = StreamRng::for_sample(3, i, StreamRole::Wiener);
        let mut state = LangevinState::new(DVector::zeros(1), DVector::from_element(1, s.sqrt() * init.normal()));
        let mut stepper = LangevinStepper::new(&friction, &free, h).unwrap();
        let mut seen = [0.0; 3];
        for k in 1..=40 {
            stepper.step(&mut state, &mut noise).unwrap();
            for (slot, &t) in times.iter().enumerate() {
                if (k as f64 * h - t).abs() < 1e-9 {
                    seen[slot] = state.p[0];
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                stats[3 * a + b].push(seen[a] * seen[b]);
            }
        }
    }
    let mut worst: f64 = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            let exact = ou_covariance_exact(&scalar(k), 0.5 * t_l, mass_ratio, &scalar(s), times[a], times[b]).unwrap()[(0, 0)];
            let st = stats[3 * a + b];
            worst = worst.max((st.mean - exact).abs() / st.stderr());
        }
    }
    (worst <= 5.0, format!("worst deviation {worst:.2} stderr over 9 (τ, σ) pairs (limit 5)"))
}

fn weak_error_convergence() -> Outcome {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "dynamics": "zwanzig",
            "seed": 11,
            "heavy": {"dof": 1, "potential": {"kind": "double_well"}, "x0": [0.2], "p0": [0.3]},
            "model": {"bath": {"kind": "scaled_debye", "modes": 500, "reduced_cutoff": 0.5, "friction": 10.0,
                               "placement": {"kind": "uniform"}}},
            "sampler": {"kind": "gibbs", "convention": "density"},
            "run": {"h": 0.01, "horizon": 1.0, "n_samples": 10000, "temperature": 0.1,
                    "mass_ratios": [100.0, 1000.0, 10000.0], "batches": 32},
            "observables": [{"name": "diffusion", "kind": {"type": "diffusion"}}]
        }"#,
    )
    .unwrap();
    let r = convergence_sweep(&cfg, &ObservableSpec::diffusion(), None).unwrap();
    let fit = r.fit.as_ref().map_or((f64::NAN, f64::NAN), |f| (f.slope, f.slope_stderr));
    let pts: Vec<String> = r
        .points
        .iter()
        .map(|p| format!("M={:.0e}: {:.3e}±{:.1e}", p.mass_ratio, p.error, p.ci_half_width))
        .collect();
    (
        r.status == CheckStatus::Pass,
        format!("{}; slope {:.3}±{:.3} (bound −0.5 + fit stderr)", pts.join(", "), fit.0, fit.1),
    )
}

fn random_wave(rng: &mut StreamRng, n: usize) -> CVector {
    let v = CVector::from_fn(n, |_, _| C64::new(rng.normal(), rng.normal()));
    let norm = v.norm();
    v / C64::new(norm, 0.0)
}

fn ehrenfest_consistency() -> Outcome {
    let m = EhrenfestModel::default_family(3, 1e4);
    let mut rng = StreamRng::new(21, 0);
    let mut route_gap: f64 = 0.0;
    for _ in 0..1000 {
        let x = DVector::from_fn(3, |_, _| 0.8 * rng.normal());
        let psi = random_wave(&mut rng, m.levels());
        let r = ehrenfest_force_routes(&m.frame(&x).unwrap(), &psi);
        route_gap = route_gap.max((&r.direct - &r.decomposed).amax());
    }

    let mut hf_gap: f64 = 0.0;
    for _ in 0..100 {
        let x = DVector::from_fn(3, |_, _| rng.normal());
        let gs = ground_state(&m, &x).unwrap();
        for n in 0..3 {
            let e = 1e-5;
            let (mut a, mut b) = (x.clone(), x.clone());
            a[n] += e;
            b[n] -= e;
            let fd = (m.frame(&a).unwrap().values[0] - m.frame(&b).unwrap().values[0]) / (2.0 * e);
            hf_gap = hf_gap.max((fd - gs.dlambda0[n]).abs() / gs.dlambda0[n].abs().max(1.0));
        }
    }

    let m1 = EhrenfestModel::default_family(1, 1e4);
    let psi = random_wave(&mut rng, m1.levels());
    let mut s = EhrenfestState::new(DVector::from_element(1, 0.1), DVector::from_element(1, 0.3), psi)
        .with_tracers(&m1)
        .unwrap();
    let mut norm_gap: f64 = 0.0;
    for _ in 0..100_000 {
        ehrenfest_step_in_place(&mut s, 0.002, &m1).unwrap();
        norm_gap = norm_gap.max((s.psi.norm() - 1.0).abs());
    }
    let ortho = s.tracer_orthogonality_defect().unwrap();
    (
        route_gap < 1e-10 && norm_gap < 1e-12 && hf_gap < 1e-6 && ortho < 1e-10,
        format!("force routes {route_gap:.1e}, norm {norm_gap:.1e}, Hellmann–Feynman {hf_gap:.1e}, orthogonality {ortho:.1e}"),
    )
}

fn adiabaticity() -> Outcome {
    let m = EhrenfestModel::default_family(1, 1e3);
    let r = adiabatic_check(
        &m,
        &DVector::from_element(1, -0.5),
        &DVector::from_element(1, 1.0),
        &[1e3, 1e4, 1e5],
        1.0,
        1e-3,
    )
    .unwrap();
    let rem: Vec<String> = r
        .points
        .iter()
        .map(|p| format!("M={:.0e}: {:.3e}", p.mass_ratio, p.max_remainder))
        .collect();
    (r.status == CheckStatus::Pass, format!("max orthogonal remainder {}", rem.join(", ")))
}

fn gibbs_consistency() -> Outcome {
    let t = 0.2;
    // point-mass friction πmκ/(2λ_d³) = 1
    let kappa = 2000.0 / PI;
    let config = |bath_t: f64| {
        ExperimentConfig::from_json(&format!(
            r#"{{
                "dynamics": "zwanzig",
                "seed": 5,
                "heavy": {{"dof": 1, "potential": {{"kind": "quadratic", "matrix": [[1.0]]}}, "x0": [0.0], "p0": [0.0]}},
                "model": {{"bath": {{"kind": "debye", "modes": 1000, "cutoff": 10.0, "kappa": {kappa},
                                    "placement": {{"kind": "uniform"}}}}}},
                "sampler": {{"kind": "gibbs", "convention": "density"}},
                "run": {{"h": 0.01, "horizon": 20.0, "n_samples": 2000, "temperature": {bath_t}, "stride": 100}}
            }}"#
        ))
        .unwrap()
    };
    let at_t = gibbs_consistency_test(&config(t), t, None).unwrap();
    let at_2t = gibbs_consistency_test(&config(2.0 * t), t, None).unwrap();
    let second = |r: &heatbath_core::harness::GibbsConsistencyReport, v: Variable| {
        let e = r.invariant.moment(v, 0, 2).unwrap().estimate.unwrap();
        format!("{:.4}±{:.4}", e.mean, e.stderr)
    };
    (
        at_t.status == CheckStatus::Pass && at_2t.status == CheckStatus::Fail,
        format!(
            "bath at T: <X²> {}, <p²> {} ({:?}); bath at 2T: <X²> {}, <p²> {} ({:?}); target {t}",
            second(&at_t, Variable::X),
            second(&at_t, Variable::P),
            at_t.status,
            second(&at_2t, Variable::X),
            second(&at_2t, Variable::P),
            at_2t.status
        ),
    )
}

fn pure_state_contrast_check() -> Outcome {
    let m = EhrenfestModel::default_family(2, 1e4);
    let r = pure_state_contrast(&m, &DVector::from_vec(vec![0.3, -0.2]), 0.5, 4000, 13).unwrap();
    (
        r.status == CheckStatus::Pass,
        format!(
            "pure states {:.2e}±{:.1e}, Gibbs {:.3e}±{:.1e} ({:.0} stderr from 0)",
            r.pure.mean,
            r.pure.stderr,
            r.gibbs.mean,
            r.gibbs.stderr,
            r.gibbs.mean / r.gibbs.stderr
        ),
    )
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 10] = [
        ("fluctuation-dissipation kernel identity", fdt_kernel_identity),
        ("Debye point-mass limit", debye_point_mass_limit),
        ("Zwanzig integrator quality", integrator_quality),
        ("Langevin invariant measure", invariant_measure),
        ("Ornstein-Uhlenbeck covariance oracle", ou_oracle),
        ("weak-error convergence in M", weak_error_convergence),
        ("Ehrenfest consistency", ehrenfest_consistency),
        ("adiabaticity", adiabaticity),
        ("Gibbs consistency", gibbs_consistency),
        ("pure-state contrast", pure_state_contrast_check),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match std::panic::catch_unwind(check) {
            Ok(o) => o,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} [{:>2}] {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
