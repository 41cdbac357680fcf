use std::io::Write;
use std::path::Path;

use dissipon_core::bcf::{
    certify_positivity, CertConfig, CertMethod, ExponentialBcf,
};
use dissipon_core::fitter::{
    compare_ansatz_with, fit_direct, fit_physical, BcfSamples, FitConfig, FitResult, Weighting,
};
use dissipon_core::hops::{noise_statistics, propagate};
use dissipon_core::lindblad::trace_distance;
use dissipon_core::pseudomode::{assemble_pseudomode, verify_model};
use dissipon_core::Integrator;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{read_json, BathInput, Engine, ProblemConfig};
use crate::engines::{self, hops_parts, observables_table};
use crate::output::{OutputDir, Provenance};
use crate::{AnsatzChoice, BuildArgs, CertifyArgs, CliError, CompareArgs, FitArgs, MethodChoice, NoiseArgs, Overrides};

fn report_written(out: &OutputDir) {
    for p in &out.written {
        println!("wrote {}", p.display());
    }
}

// ---------------------------------------------------------------------------
// fit

fn parse_field(field: &str, path: &Path, line: usize) -> Result<f64, CliError> {
    field.trim().parse::<f64>().map_err(|_| {
        CliError::Config(format!("{}:{line}: '{field}' is not a number", path.display()))
    })
}

/// CSV rows `tau, re, im[, weight]`; `#` comments and one header row are skipped.
fn read_samples_csv(path: &Path) -> Result<BcfSamples, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let (mut taus, mut values, mut weights) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if i == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() < 3 || rec.len() > 4 {
            return Err(CliError::Config(format!(
                "{}:{}: expected 3 or 4 columns, found {}",
                path.display(),
                i + 1,
                rec.len()
            )));
        }
        taus.push(parse_field(&rec[0], path, i + 1)?);
        values.push(Complex64::new(parse_field(&rec[1], path, i + 1)?, parse_field(&rec[2], path, i + 1)?));
        if rec.len() == 4 {
            weights.push(parse_field(&rec[3], path, i + 1)?);
        }
    }
    let weights = match weights.len() {
        0 => None,
        n if n == taus.len() => Some(weights),
        _ => return Err(CliError::Config("weights must be given for every row or none".into())),
    };
    BcfSamples::new(taus, values, weights).map_err(|e| CliError::Config(e.to_string()))
}

pub fn load_samples(path: &Path) -> Result<BcfSamples, CliError> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let samples: BcfSamples = if is_json { read_json(path)? } else { read_samples_csv(path)? };
    samples.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(samples)
}

#[derive(Serialize, Deserialize)]
struct FitJob {
    samples: BcfSamples,
    terms: usize,
    ansatz: AnsatzChoice,
    fit: FitConfig,
}

pub fn fit(a: &FitArgs, out: &mut OutputDir) -> Result<(), CliError> {
    let samples = load_samples(&a.input)?;
    let weighting = match a.weight_rate {
        None => Weighting::Uniform,
        Some(rate) if rate.is_finite() && rate >= 0.0 => Weighting::Exponential { rate },
        Some(rate) => return Err(CliError::Config(format!("invalid weight rate {rate}"))),
    };
    if a.restarts == 0 || a.max_iterations == 0 {
        return Err(CliError::Config("restarts and max-iterations must be positive".into()));
    }
    let job = FitJob {
        samples,
        terms: a.terms as usize,
        ansatz: a.ansatz,
        fit: FitConfig {
            restarts: a.restarts,
            seed: a.seed,
            max_iterations: a.max_iterations,
            weighting,
            ..FitConfig::default()
        },
    };
    let prov = Provenance::new("fit", &job)?;
    let (physical, direct) = match job.ansatz {
        AnsatzChoice::Physical => (Some(fit_physical(&job.samples, job.terms, &job.fit)?), None),
        AnsatzChoice::Direct => (None, Some(fit_direct(&job.samples, job.terms, &job.fit)?)),
        AnsatzChoice::Both => {
            let report = compare_ansatz_with(&job.samples, job.terms, &job.fit);
            out.json("fit_comparison.json", &report, &prov)?;
            if let (Some(e1), Some(e2)) = (&report.physical.error, &report.direct.error) {
                return Err(CliError::Numerical {
                    kind: "FitFailure",
                    message: format!("physical arm: {e1}; direct arm: {e2}"),
                });
            }
            (report.physical.result, report.direct.result)
        }
    };
    let mut header = vec!["tau".to_string(), "target_re".into(), "target_im".into()];
    let fits: Vec<&FitResult> = physical.iter().chain(direct.iter()).collect();
    for f in &fits {
        let name = format!("{:?}", f.ansatz).to_lowercase();
        header.push(format!("{name}_re"));
        header.push(format!("{name}_im"));
    }
    let rows: Vec<Vec<f64>> = job
        .samples
        .taus()
        .iter()
        .zip(job.samples.values())
        .map(|(&t, y)| {
            let mut row = vec![t, y.re, y.im];
            for f in &fits {
                let v = f.bcf.eval(t);
                row.push(v.re);
                row.push(v.im);
            }
            row
        })
        .collect();
    for f in &fits {
        let name = format!("fit_{:?}.json", f.ansatz).to_lowercase();
        out.json(&name, f, &prov)?;
        print!("{}", f.summary());
    }
    out.csv("fit_curve.csv", &header, &rows, &prov)?;
    report_written(out);
    Ok(())
}

// ---------------------------------------------------------------------------
// certify

#[derive(Serialize)]
struct CertifyJob {
    bcf: ExponentialBcf,
    config: CertConfig,
    curve_points: usize,
}

pub fn certify(a: &CertifyArgs, out: &mut OutputDir) -> Result<(), CliError> {
    let bcf = BathInput::load(&a.input)?.bcf();
    if a.curve_points < 2 || a.grid_points < 2 {
        return Err(CliError::Config("curve-points and grid-points must be at least 2".into()));
    }
    let config = CertConfig {
        method: match a.method {
            MethodChoice::Grid => CertMethod::Grid,
            MethodChoice::PolynomialRoots => CertMethod::PolynomialRoots,
            MethodChoice::Both => CertMethod::Both,
        },
        grid_points: a.grid_points,
        ..CertConfig::default()
    };
    let job = CertifyJob {
        bcf,
        config,
        curve_points: a.curve_points,
    };
    let prov = Provenance::new("certify", &job)?;
    let report = certify_positivity(&job.bcf, &job.config)?;
    out.json("certify.json", &report, &prov)?;

    let scale = job.bcf.lambdas().iter().map(|l| l.norm()).fold(1.0, f64::max);
    let span = 5.0 * scale;
    let n = job.curve_points;
    let spectrum: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let w = -span + 2.0 * span * i as f64 / (n - 1) as f64;
            job.bcf.spectral_density(w).map(|j| vec![w, j])
        })
        .collect::<Result<_, _>>()?;
    out.csv("spectral_density.csv", &["omega".into(), "J".into()], &spectrum, &prov)?;
    let rate = job.bcf.lambdas().iter().map(|l| l.re).fold(f64::INFINITY, f64::min);
    let horizon = if rate.is_finite() { 10.0 / rate } else { 10.0 };
    let curve: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let t = horizon * i as f64 / (n - 1) as f64;
            let v = job.bcf.eval(t);
            vec![t, v.re, v.im]
        })
        .collect();
    out.csv("bcf.csv", &["tau".into(), "re".into(), "im".into()], &curve, &prov)?;
    println!(
        "is_physical = {}, min J = {:.6e} at omega = {:.6}",
        report.is_physical, report.min_spectral_value, report.witness_frequency
    );
    report_written(out);
    Ok(())
}

// ---------------------------------------------------------------------------
// build

pub fn build(a: &BuildArgs, out: &mut OutputDir) -> Result<(), CliError> {
    let input = BathInput::load(&a.input)?;
    let prov = Provenance::new("build", &json!({ "bath": &input, "verify": a.verify }))?;
    let p = input.parametrization()?;
    let model = assemble_pseudomode(&p)?;
    out.json("model.json", &model, &prov)?;
    println!(
        "built {} pseudomodes, damped rows {:?}",
        model.modes(),
        model.damped_rows()
    );
    let mut failed = false;
    if a.verify {
        let report = verify_model(&model, &input.bcf())?;
        failed = !report.all_pass();
        out.json("verification.json", &json!({ "all_pass": !failed, "report": report }), &prov)?;
        println!("verification: {}", if failed { "FAILED" } else { "all checks pass" });
    }
    report_written(out);
    if failed {
        return Err(CliError::Threshold("model verification failed".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate / compare

fn resolve(o: &Overrides) -> Result<ProblemConfig, CliError> {
    let mut cfg = ProblemConfig::load(&o.problem)?;
    if let Some(x) = o.heom_depth {
        cfg.truncation.heom_depth = x;
    }
    if let Some(x) = o.fock_cap {
        cfg.truncation.fock_cap = x;
    }
    if let Some(x) = o.hops_depth {
        cfg.truncation.hops_depth = x;
    }
    if let Some(x) = o.variant {
        cfg.hops.variant = x;
    }
    if let Some(x) = o.trajectories {
        cfg.hops.trajectories = x;
    }
    if let Some(x) = o.seed {
        cfg.hops.seed = x;
    }
    if let Some(x) = o.dt {
        cfg.hops.dt = x;
    }
    if let Some(dt) = o.rk4_step {
        cfg.integrator = Integrator::Rk4 { dt };
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn simulate(engine: Engine, o: &Overrides, dump: usize, out: &mut OutputDir) -> Result<(), CliError> {
    let mut cfg = resolve(o)?;
    cfg.engines = vec![engine];
    let prov = Provenance::new(&format!("simulate {}", engine.name()), &cfg)?;
    let result = engines::run(engine, &cfg)?;
    let (header, rows) = observables_table(&cfg, &result);
    out.csv(&format!("{}.csv", engine.name()), &header, &rows, &prov)?;
    out.json(&format!("{}_diagnostics.json", engine.name()), &result.diagnostics, &prov)?;
    if engine == Engine::Hops && dump > 0 {
        let (system, noise, config) = hops_parts(&cfg)?;
        let path = out_path(out, "trajectories.jsonl");
        let mut file = std::fs::File::create(&path)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        for i in 0..dump.min(config.trajectories) {
            let noise_path = noise.sample(config.n_steps, config.seed, i as u64);
            let traj = propagate(config.variant, &system, &cfg.system.initial_state, &noise_path, config.integrator, config.stride)?;
            let line = json!({ "trajectory": i, "data": traj });
            writeln!(file, "{line}")
                .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        }
        out.written.push(path);
    }
    println!("{}: {} output times, diagnostics {}", engine.name(), result.times.len(), result.diagnostics);
    report_written(out);
    Ok(())
}

fn out_path(out: &OutputDir, name: &str) -> std::path::PathBuf {
    out.root().join(name)
}

pub fn compare(a: &CompareArgs, out: &mut OutputDir) -> Result<(), CliError> {
    let mut cfg = resolve(&a.overrides)?;
    if let Some(e) = &a.engines {
        cfg.engines = e.clone();
    }
    if cfg.engines.is_empty() {
        cfg.engines = vec![Engine::Heom, Engine::Lindblad];
    }
    let mut seen = Vec::new();
    for e in &cfg.engines {
        if seen.contains(e) {
            return Err(CliError::Config(format!("engine {} listed twice", e.name())));
        }
        seen.push(*e);
    }
    if cfg.engines.len() < 2 {
        return Err(CliError::Config("compare needs at least two engines".into()));
    }
    if !(a.threshold > 0.0) {
        return Err(CliError::Config("threshold must be positive".into()));
    }
    let prov = Provenance::new("compare", &json!({ "problem": &cfg, "threshold": a.threshold }))?;
    let results: Vec<engines::EngineResult> = cfg
        .engines
        .iter()
        .map(|&e| engines::run(e, &cfg))
        .collect::<Result<_, _>>()?;
    let times = &results[0].times;
    let mut header = vec!["t".to_string()];
    let mut pairs = Vec::new();
    for i in 0..results.len() {
        for j in (i + 1)..results.len() {
            header.push(format!("{}_vs_{}", results[i].engine.name(), results[j].engine.name()));
            pairs.push((i, j));
        }
    }
    let mut max_dist = vec![0.0f64; pairs.len()];
    let rows: Vec<Vec<f64>> = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut row = vec![t];
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let d = trace_distance(&results[i].rho[k], &results[j].rho[k]);
                max_dist[p] = max_dist[p].max(d);
                row.push(d);
            }
            row
        })
        .collect();
    out.csv("compare.csv", &header, &rows, &prov)?;
    let worst = max_dist.iter().cloned().fold(0.0, f64::max);
    let pass = worst <= a.threshold;
    let verdict = json!({
        "pass": pass,
        "threshold": a.threshold,
        "max_trace_distance": worst,
        "pairs": pairs.iter().zip(&max_dist).map(|(&(i, j), d)| json!({
            "engines": [results[i].engine.name(), results[j].engine.name()],
            "max_trace_distance": d,
        })).collect::<Vec<_>>(),
        "diagnostics": results.iter().map(|r| (r.engine.name().to_string(), r.diagnostics.clone())).collect::<serde_json::Map<_, _>>(),
    });
    out.json("compare.json", &verdict, &prov)?;
    println!(
        "max trace distance {worst:.3e} vs threshold {:.1e}: {}",
        a.threshold,
        if pass { "PASS" } else { "FAIL" }
    );
    report_written(out);
    if !pass {
        return Err(CliError::Threshold(format!(
            "max trace distance {worst:.3e} exceeds {:.1e}",
            a.threshold
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// noise-check

#[derive(Serialize)]
struct NoiseJob {
    bath: BathInput,
    paths: usize,
    dt: f64,
    probe_times: Vec<f64>,
    seed: u64,
    max_z: f64,
}

pub fn noise_check(a: &NoiseArgs, out: &mut OutputDir) -> Result<(), CliError> {
    let bath = BathInput::load(&a.input)?;
    if a.probes < 1 || !(a.t_end >= 0.0) || !(a.dt > 0.0) {
        return Err(CliError::Config("need probes >= 1, t-end >= 0 and dt > 0".into()));
    }
    let probe_times: Vec<f64> = if a.probes == 1 {
        vec![a.t_end]
    } else {
        (0..a.probes).map(|k| a.t_end * k as f64 / (a.probes - 1) as f64).collect()
    };
    let job = NoiseJob {
        bath,
        paths: a.paths,
        dt: a.dt,
        probe_times,
        seed: a.seed,
        max_z: a.max_z,
    };
    let prov = Provenance::new("noise-check", &job)?;
    let p = job.bath.parametrization()?;
    let stats = noise_statistics(&p, job.dt, &job.probe_times, job.paths, job.seed)?;
    let header: Vec<String> = ["t", "s", "estimate_re", "estimate_im", "expected_re", "expected_im", "stderr_re", "stderr_im", "z"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<f64>> = stats
        .probes
        .iter()
        .map(|p| vec![p.t, p.s, p.estimate.re, p.estimate.im, p.expected.re, p.expected.im, p.stderr.0, p.stderr.1, p.z_score])
        .collect();
    out.csv("noise_check.csv", &header, &rows, &prov)?;
    let worst = stats.max_z_score();
    let pass = worst <= job.max_z;
    out.json(
        "noise_check.json",
        &json!({
            "pass": pass,
            "max_z_score": worst,
            "max_auxiliary_z_score": stats.max_auxiliary_z_score(),
            "max_z": job.max_z,
            "statistics": stats,
        }),
        &prov,
    )?;
    println!("{} probes, {} paths, max |z| = {worst:.3}: {}", stats.probes.len(), stats.paths, if pass { "PASS" } else { "FAIL" });
    report_written(out);
    if !pass {
        return Err(CliError::Threshold(format!("max |z| {worst:.3} exceeds {}", job.max_z)));
    }
    Ok(())
}
