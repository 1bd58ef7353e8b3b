//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use extphase::brackets::{dirac, poisson, ConstraintMatrix};
use extphase::canonical::{complete, registry, symplectic_defect, TransformSpec};
use extphase::constraints::{GaugeSpec, PointSampler};
use extphase::dynamics::{
    constraint_drift, gauge_equivalence_error, gauge_grid, uniform_grid, IntegratorPolicy,
    Oscillator,
};
use extphase::expr::{Chart, PhaseExpr, Registry};
use extphase::invariants::{
    ermakov_residual, invariant_drift_report, lewis_invariant, solve_coupled, solve_ermakov,
    ErmakovConfig,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

const PHI: &str = "pt + f(t)/(2*m)*(p1^2 + p2^2) + m*w(t)^2/(2*f(t))*(x1^2 + x2^2)";

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn binary(args: &[&str]) -> Result<Output, String> {
    Command::new(env!("CARGO_BIN_EXE_extphase"))
        .args(args)
        .output()
        .map_err(|e| format!("cannot run binary: {e}"))
}

fn tempdir() -> Result<tempfile::TempDir, String> {
    tempfile::tempdir().map_err(|e| e.to_string())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Random polynomial in the extended chart with rational coefficients and
/// coefficient functions of `t`.
fn random_poly(s: &mut PointSampler) -> PhaseExpr {
    const FACTORS: &[&str] = &[
        "x1", "x2", "t", "p1", "p2", "pt", "m", "f(t)", "w(t)", "f(t)^-1", "x1^2", "p2^2",
    ];
    let pick = |s: &mut PointSampler, n: usize| (s.uniform(0.0, n as f64) as usize).min(n - 1);
    let terms = 1 + pick(s, 4);
    let mut text = Vec::new();
    for _ in 0..terms {
        let mut term = format!("({}/{})", pick(s, 9) as i64 - 4, 1 + pick(s, 3));
        for _ in 0..pick(s, 4) {
            term.push('*');
            term.push_str(FACTORS[pick(s, FACTORS.len())]);
        }
        text.push(term);
    }
    Registry::oscillator()
        .parse(&text.join(" + "))
        .expect("generated polynomial parses")
}

fn criterion_1() -> Check {
    let dir = tempdir()?;
    let out = dir.path().to_str().unwrap();
    let start = Instant::now();
    let orig = binary(&[
        "analyze",
        scenario("original.toml").to_str().unwrap(),
        "--out",
        out,
    ])?;
    ensure(orig.status.success(), || "original analysis failed".into())?;
    let orig_json =
        fs::read_to_string(dir.path().join("analysis.json")).map_err(|e| e.to_string())?;
    let ext = binary(&[
        "analyze",
        scenario("gauge_fixed.toml").to_str().unwrap(),
        "--out",
        out,
    ])?;
    let elapsed = start.elapsed();
    ensure(ext.status.success(), || "extended analysis failed".into())?;
    let ext_json =
        fs::read_to_string(dir.path().join("analysis.json")).map_err(|e| e.to_string())?;

    let reg = Registry::oscillator();
    let parse = |v: &serde_json::Value| {
        reg.parse(v.as_str().unwrap_or("?"))
            .map_err(|e| e.to_string())
    };
    let same = |v: &serde_json::Value, oracle: &str| -> Result<(), String> {
        let got = parse(v)?;
        let want = reg.parse(oracle).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("{got} != {oracle}"))
    };
    let o: serde_json::Value = serde_json::from_str(&orig_json).map_err(|e| e.to_string())?;
    let e: serde_json::Value = serde_json::from_str(&ext_json).map_err(|e| e.to_string())?;
    same(&o["hessian_det"], "m^2/f(t)^2")?;
    same(&e["hessian_det"], "0")?;
    ensure(e["rank"] == 2, || "rank".into())?;
    let cons = e["classification"].as_array().ok_or("no constraints")?;
    ensure(cons.len() == 1 && cons[0]["class"] == "first-class", || {
        "expected one first-class constraint".into()
    })?;
    same(&cons[0]["expression"], PHI)?;
    same(&e["hamiltonian"], &format!("tdot*({PHI})"))?;
    let g = &e["gauge"];
    ensure(
        g["delta"] == "[[0, -1], [1, 0]]" && g["inverse"] == "[[0, 1], [-1, 0]]",
        || "constraint matrix".into(),
    )?;
    let expected = [
        ("x1", "p1", "1"),
        ("x2", "p2", "1"),
        ("x1", "pt", "-f(t)*p1/m"),
        ("x2", "pt", "-f(t)*p2/m"),
        ("p1", "pt", "m*w(t)^2*x1/f(t)"),
        ("p2", "pt", "m*w(t)^2*x2/f(t)"),
    ];
    let brackets = g["dirac_brackets"].as_array().ok_or("no brackets")?;
    ensure(brackets.len() == 6, || {
        format!("{} nonvanishing brackets", brackets.len())
    })?;
    for b in brackets {
        let (l, r) = (
            b["left"].as_str().unwrap_or(""),
            b["right"].as_str().unwrap_or(""),
        );
        let (_, _, text) = expected
            .iter()
            .find(|(x, y, _)| *x == l && *y == r)
            .ok_or(format!("unexpected {{{l}, {r}}}"))?;
        same(&b["value"], text)?;
    }
    ensure(elapsed < Duration::from_secs(5), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "golden values match, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let reg = Registry::oscillator();
    let chart = Chart::extended();
    let phi = reg.parse(PHI).map_err(|e| e.to_string())?;
    let mut s = PointSampler::new(2);
    for lam in ["1/2", "1", "2"] {
        let eta = reg
            .parse(&format!("t - ({lam}*tau + 1/3)"))
            .map_err(|e| e.to_string())?;
        let cm = ConstraintMatrix::new(vec![phi.clone(), eta.clone()], &chart, &reg)
            .map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let g = random_poly(&mut s);
            for c in [&phi, &eta] {
                let db = dirac(c, &g, &cm, &chart, &reg).map_err(|e| e.to_string())?;
                ensure(db.is_zero(), || format!("{{{c}, {g}}}_D = {db}"))?;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "60 functions, exactly zero, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let mut s = PointSampler::new(3);
    let (mut eq, mut drift, mut hamilton) = (0.0f64, 0.0f64, 0.0f64);
    let t_grid = uniform_grid(0.0, 10.0, 200);
    let policy = IntegratorPolicy::rk45(1e-12);
    for k in 0..10 {
        let (w, eta) = (s.uniform(0.5, 3.0), s.uniform(0.0, 1.0));
        let init: [f64; 4] = std::array::from_fn(|_| s.uniform(-1.0, 1.0));
        let lam = [0.5, 1.0, 2.0][k % 3];
        let osc = Oscillator::caldirola_kanai(1.0, w, eta).map_err(|e| e.to_string())?;
        let gauge = GaugeSpec::new(0.0, 10.0 / lam, 0.0, 10.0).map_err(|e| e.to_string())?;
        let orig = osc
            .integrate_original(&init, &t_grid, &policy)
            .map_err(|e| e.to_string())?;
        let y0 = osc
            .extended_initial(&gauge, &init)
            .map_err(|e| e.to_string())?;
        let ext = osc
            .integrate_extended(&gauge, &y0, &gauge_grid(&gauge, &t_grid), &policy)
            .map_err(|e| e.to_string())?;
        eq = eq.max(gauge_equivalence_error(&orig, &ext).map_err(|e| e.to_string())?);
        let d = constraint_drift(
            &ext,
            &[osc.constraint().clone(), gauge.eta_gauge()],
            osc.registry(),
            osc.params(),
        )
        .map_err(|e| e.to_string())?;
        drift = drift.max(max_abs(&d[0])).max(max_abs(&d[1]));
        let series = |v: &str| ext.series(v).ok_or(format!("no {v}"));
        let (x1, x2, t, p1, p2, pt) = (
            series("x1")?,
            series("x2")?,
            series("t")?,
            series("p1")?,
            series("p2")?,
            series("pt")?,
        );
        for i in 0..ext.len() {
            let h = osc
                .energy(t[i], &[x1[i], x2[i], p1[i], p2[i]])
                .map_err(|e| e.to_string())?;
            hamilton = hamilton.max((pt[i] + h).abs());
        }
    }
    let elapsed = start.elapsed();
    ensure(eq < 1e-6, || format!("equivalence error {eq:e}"))?;
    ensure(drift < 1e-8, || format!("constraint drift {drift:e}"))?;
    ensure(hamilton < 1e-7, || format!("|pt + H| = {hamilton:e}"))?;
    ensure(elapsed < Duration::from_secs(30), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "equivalence {eq:.1e}, drift {drift:.1e}, |pt + H| {hamilton:.1e}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

/// `x(t)` for `x'' + eta x' + w^2 x = 0` in the underdamped regime.
fn damped_solution(w: f64, eta: f64, x0: f64, v0: f64, t: f64) -> f64 {
    let big = (w * w - eta * eta / 4.0).sqrt();
    (-eta * t / 2.0).exp() * (x0 * (big * t).cos() + (v0 + eta * x0 / 2.0) / big * (big * t).sin())
}

fn criterion_4() -> Check {
    let mut s = PointSampler::new(4);
    let grid = uniform_grid(0.0, 10.0, 200);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (m, w, eta) = (
            s.uniform(0.5, 2.0),
            s.uniform(0.5, 3.0),
            s.uniform(0.0, 1.0),
        );
        let init: [f64; 4] = std::array::from_fn(|_| s.uniform(-1.0, 1.0));
        let osc = Oscillator::caldirola_kanai(m, w, eta).map_err(|e| e.to_string())?;
        let traj = osc
            .integrate_original(&init, &grid, &IntegratorPolicy::default())
            .map_err(|e| e.to_string())?;
        for (i, var) in ["x1", "x2"].iter().enumerate() {
            let x = traj.series(var).ok_or("missing series")?;
            for (k, &t) in grid.iter().enumerate() {
                worst =
                    worst.max((x[k] - damped_solution(w, eta, init[i], init[i + 2] / m, t)).abs());
            }
        }
    }
    ensure(worst < 1e-7, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation from closed form {worst:.1e}"))
}

fn criterion_5() -> Check {
    let mut s = PointSampler::new(5);
    let grid = uniform_grid(0.0, 10.0, 400);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (m, w, eta, nu) = (
            s.uniform(0.5, 2.0),
            s.uniform(0.5, 3.0),
            s.uniform(0.0, 1.0),
            s.uniform(0.2, 3.0),
        );
        let cfg = ErmakovConfig::new(nu, s.uniform(0.5, 2.0), s.uniform(-0.5, 0.5))
            .map_err(|e| e.to_string())?;
        let init: [f64; 4] = std::array::from_fn(|_| s.uniform(-1.0, 1.0));
        let osc = Oscillator::caldirola_kanai(m, w, eta).map_err(|e| e.to_string())?;
        let (traj, sol) = solve_coupled(&osc, &cfg, &init, &grid, &IntegratorPolicy::default())
            .map_err(|e| e.to_string())?;
        let inv = lewis_invariant(&traj, &sol, &osc, nu).map_err(|e| e.to_string())?;
        ensure(inv.iter().all(|&i| i >= 0.0), || {
            "negative invariant".into()
        })?;
        worst = worst.max(invariant_drift_report(&grid, &inv).max_drift);
    }
    ensure(worst < 1e-6, || format!("relative drift {worst:e}"))?;

    let mut eq = 0.0f64;
    for _ in 0..5 {
        let (m, w) = (s.uniform(0.5, 2.0), s.uniform(0.5, 3.0));
        let init: [f64; 4] = std::array::from_fn(|_| s.uniform(-1.0, 1.0));
        let osc = Oscillator::caldirola_kanai(m, w, 0.0).map_err(|e| e.to_string())?;
        let cfg = ErmakovConfig::equilibrium(&osc, 0.0, s.uniform(0.5, 2.0))
            .map_err(|e| e.to_string())?;
        let grid = uniform_grid(0.0, 10.0, 100);
        let (traj, sol) = solve_coupled(&osc, &cfg, &init, &grid, &IntegratorPolicy::default())
            .map_err(|e| e.to_string())?;
        let inv = lewis_invariant(&traj, &sol, &osc, cfg.nu).map_err(|e| e.to_string())?;
        for (k, &t) in grid.iter().enumerate() {
            let st = traj.state(k);
            let energy = osc
                .energy(t, &[st[0], st[1], st[2], st[3]])
                .map_err(|e| e.to_string())?;
            let expected = cfg.nu / w * energy;
            eq = eq.max((inv[k] - expected).abs() / expected.abs().max(1.0));
        }
    }
    ensure(eq < 1e-9, || format!("equilibrium mismatch {eq:e}"))?;
    Ok(format!(
        "max relative drift {worst:.1e}, equilibrium I vs (nu/w)E {eq:.1e}"
    ))
}

fn criterion_6() -> Check {
    let mut ansatz = 0.0f64;
    for (m, w, nu) in [(1.0, 2.0, 2.0), (1.5, 0.7, 0.4), (0.6, 2.5, 3.0)] {
        let osc = Oscillator::caldirola_kanai(m, w, 0.0).map_err(|e| e.to_string())?;
        let rho = (nu / (m * w)).sqrt();
        let cfg = ErmakovConfig::new(nu, rho, 0.0).map_err(|e| e.to_string())?;
        let sol = solve_ermakov(
            &osc,
            &cfg,
            &uniform_grid(0.0, 10.0, 100),
            &IntegratorPolicy::default(),
        )
        .map_err(|e| e.to_string())?;
        ansatz = sol.rho.iter().fold(ansatz, |a, r| a.max((r - rho).abs()));
    }
    ensure(ansatz < 1e-10, || {
        format!("constant solution moved by {ansatz:e}")
    })?;

    let mut s = PointSampler::new(6);
    let mut residual = 0.0f64;
    for _ in 0..5 {
        let (w, eta, nu) = (
            s.uniform(0.5, 3.0),
            s.uniform(0.0, 1.0),
            s.uniform(0.2, 3.0),
        );
        let osc = Oscillator::caldirola_kanai(1.0, w, eta).map_err(|e| e.to_string())?;
        let cfg = ErmakovConfig::new(nu, s.uniform(0.7, 1.5) * (nu / w).sqrt(), 0.1)
            .map_err(|e| e.to_string())?;
        let sol = solve_ermakov(
            &osc,
            &cfg,
            &uniform_grid(0.0, 10.0, 4000),
            &IntegratorPolicy::default(),
        )
        .map_err(|e| e.to_string())?;
        residual = residual.max(ermakov_residual(&sol, &osc, nu).map_err(|e| e.to_string())?);
    }
    ensure(residual < 1e-6, || format!("residual {residual:e}"))?;
    Ok(format!(
        "constant solution to {ansatz:.1e}, residual {residual:.1e}"
    ))
}

/// Leading coefficient in `[1, 3]` plus a small polynomial in `var` and `T`.
fn random_map(s: &mut PointSampler, var: &str) -> String {
    let lead = 2 + (s.uniform(0.0, 5.0) as i64).min(4);
    let mut text = format!("({lead}/2)*{var}");
    for _ in 0..(s.uniform(0.0, 4.0) as usize).min(3) {
        let n = (s.uniform(0.0, 5.0) as i64).min(4) - 2;
        let i = (s.uniform(0.0, 4.0) as u32).min(3);
        let j = (s.uniform(0.0, 4.0) as u32).min(3 - i);
        text.push_str(&format!(" + ({n}/20)*({var}/2)^{i}*(T/2)^{j}"));
    }
    text
}

fn criterion_7() -> Check {
    let mut s = PointSampler::new(7);
    let (mut defect, mut residual) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let a1 = random_map(&mut s, "Q1");
        let a2 = random_map(&mut s, "Q2");
        let b = random_map(&mut s, "T");
        let d1 = format!("({})*Q1^2*T", (s.uniform(0.0, 7.0) as i64).min(6) - 3);
        let d2 = format!("({})*Q2*T^2", (s.uniform(0.0, 7.0) as i64).min(6) - 3);
        let spec = TransformSpec::parse([&a1, &a2, &b, &d1, &d2]).map_err(|e| e.to_string())?;
        let tr = complete(&spec).map_err(|e| e.to_string())?;
        let pts: Vec<[f64; 6]> = (0..32)
            .map(|_| std::array::from_fn(|_| s.uniform(-1.0, 1.0)))
            .collect();
        defect = defect.max(symplectic_defect(&tr, &pts).map_err(|e| e.to_string())?);
        for p in &pts {
            residual = tr
                .ode_residuals(p)
                .map_err(|e| e.to_string())?
                .iter()
                .fold(residual, |m, r| m.max(r.abs()));
        }
    }
    ensure(defect < 1e-9, || format!("defect {defect:e}"))?;
    ensure(residual < 1e-9, || format!("ODE residual {residual:e}"))?;

    let mut bad =
        TransformSpec::parse(["2*Q1 + Q1^3/10", "Q2", "T", "0", "0"]).map_err(|e| e.to_string())?;
    bad.c1 = Some(
        registry()
            .parse("2/(2 + 3*Q1^2/10)")
            .map_err(|e| e.to_string())?,
    );
    let pts: Vec<[f64; 6]> = (0..32)
        .map(|_| std::array::from_fn(|_| s.uniform(-1.0, 1.0)))
        .collect();
    let corrupted = symplectic_defect(&complete(&bad).map_err(|e| e.to_string())?, &pts)
        .map_err(|e| e.to_string())?;
    ensure(corrupted >= 1e-3, || {
        format!("corrupted defect only {corrupted:e}")
    })?;
    let dir = tempdir()?;
    let o = binary(&[
        "transform-check",
        scenario("corrupted_transform.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ])?;
    ensure(o.status.code() == Some(1), || {
        format!("corrupted check exited with {:?}", o.status.code())
    })?;
    Ok(format!(
        "defect {defect:.1e}, residual {residual:.1e}, corrupted defect {corrupted:.2}"
    ))
}

fn criterion_8() -> Check {
    let reg = Registry::oscillator();
    let chart = Chart::extended();
    let pb = |f: &PhaseExpr, g: &PhaseExpr| poisson(f, g, &chart, &reg).map_err(|e| e.to_string());
    let mut s = PointSampler::new(8);
    let mut jacobi = 0.0f64;
    for _ in 0..50 {
        let (f, g, h) = (
            random_poly(&mut s),
            random_poly(&mut s),
            random_poly(&mut s),
        );
        ensure(pb(&f, &g)? == pb(&g, &f)?.neg_expr(), || {
            format!("antisymmetry fails for {f}, {g}")
        })?;
        let lin = pb(&f.scale(&extphase::expr::rat(3)).add_expr(&g), &h)?;
        ensure(
            lin == pb(&f, &h)?
                .scale(&extphase::expr::rat(3))
                .add_expr(&pb(&g, &h)?),
            || "bilinearity".into(),
        )?;
        let leib = f.mul_expr(&pb(&g, &h)?).add_expr(&pb(&f, &h)?.mul_expr(&g));
        ensure(pb(&f.mul_expr(&g), &h)? == leib, || "Leibniz rule".into())?;
        let terms = [
            pb(&f, &pb(&g, &h)?)?,
            pb(&g, &pb(&h, &f)?)?,
            pb(&h, &pb(&f, &g)?)?,
        ];
        let b = s.bindings(&terms.iter().collect::<Vec<_>>());
        let vals: Vec<f64> = terms
            .iter()
            .map(|e| e.eval(&reg, &b, 0.0))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        jacobi = jacobi.max(vals.iter().sum::<f64>().abs() / scale);
    }
    ensure(jacobi < 1e-9, || format!("Jacobi residual {jacobi:e}"))?;
    Ok(format!("50 triples, Jacobi residual {jacobi:.1e}"))
}

fn criterion_9() -> Check {
    let dir = tempdir()?;
    let cfg = dir.path().join("fixed.toml");
    fs::write(
        &cfg,
        "[profiles]\nomega = 1.5\nfriction = 0.3\n\n[time]\nt2 = 5.0\nsamples = 100\n\n[initial]\nx1 = 0.5\np2 = -0.25\n\n[integrator]\nmethod = \"rk4\"\nmax_step = 0.001\n",
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = binary(&[
            "simulate",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])?;
        ensure(o.status.success(), || {
            String::from_utf8_lossy(&o.stderr).into_owned()
        })?;
        let files: Vec<Vec<u8>> = ["original.csv", "extended.csv"]
            .iter()
            .map(|f| fs::read(out.join(f)))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        outputs.push(files);
    }
    ensure(outputs[0] == outputs[1], || {
        "CSV files differ between runs".into()
    })?;
    Ok(format!(
        "{} bytes identical across runs",
        outputs[0].iter().map(Vec::len).sum::<usize>()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("symbolic analysis of the oscillator", criterion_1),
        ("Dirac bracket annihilates the constraints", criterion_2),
        ("gauge-fixed flow reproduces the original", criterion_3),
        ("damped oscillator matches closed form", criterion_4),
        ("invariant is conserved", criterion_5),
        ("auxiliary equation is solved", criterion_6),
        ("completed transformations are symplectic", criterion_7),
        ("Poisson bracket axioms", criterion_8),
        ("fixed-step runs are reproducible", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
