//! One function per subcommand. Each returns the process exit code.

use std::path::{Path, PathBuf};

use serde_json::json;

use schrodecay::decaylab::{
    corollary_experiment, dispersive_scan, dyadic_split_diagnostic, lemma_jn_scan, long_time_experiment,
    short_time_experiment, DecayReport, Setup,
};
use schrodecay::dyadic::DyadicSystem;
use schrodecay::evolve::{propagate_series, write_trajectory, PropagationMethod};
use schrodecay::lattice::{load_field, sample_potential};
use schrodecay::norms::{
    besov_norm, default_profile_radii, hypothesis_check, kato_norm, kato_profile, rollnik_functional, triebel_norm,
    BesovIndex, PotentialReport,
};
use schrodecay::suite::{self, SuiteOptions, CRITERIA};

use crate::config::Experiment;
use crate::output::{envelope, write_config_echo, write_json};
use crate::{Cli, CliError, Command, Global, IndexArgs, Method, RunConfig};

const DEFAULT_OUT: &str = "schrodecay-out";

pub fn dispatch(cli: &Cli) -> Result<u8, CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::ValidateDyadic { j_max, samples } => validate_dyadic(g, *j_max, *samples),
        Command::PotentialCheck => potential_check(g),
        Command::Besov(args) => norm(g, args, "besov"),
        Command::Triebel(args) => norm(g, args, "triebel"),
        Command::Kato { deltas } => kato(g, deltas),
        Command::Rollnik { samples } => rollnik(g, *samples),
        Command::Propagate { field, times, method } => propagate(g, field, times, *method),
        Command::Experiment => experiment(g),
        Command::Suite { only } => run_suite(g, only),
    }
}

fn load_config(g: &Global) -> Result<RunConfig, CliError> {
    let path = g.config.as_ref().ok_or_else(|| CliError::Usage("this command needs --config PATH".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(g: &Global, cfg: Option<&RunConfig>) -> PathBuf {
    g.out.clone().or_else(|| cfg.and_then(|c| c.output.clone())).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn plan(steps: &[String]) -> Result<u8, CliError> {
    println!("dry run, nothing computed. Plan:");
    for (k, s) in steps.iter().enumerate() {
        println!("  {}. {s}", k + 1);
    }
    Ok(0)
}

fn finish_config(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    write_config_echo(dir, cfg)?;
    Ok(())
}

fn validate_dyadic(g: &Global, j_max: usize, samples: usize) -> Result<u8, CliError> {
    let sys = DyadicSystem::new(j_max)?;
    if g.dry_run {
        return plan(&[format!("validate dyadic system J = {j_max} with {samples} samples per octave")]);
    }
    let report = sys.validate(samples)?;
    println!(
        "J = {j_max}: partition defect {:.3e}, support violations {}, derivative spreads {}",
        report.partition_defect,
        report.support_violations,
        report.derivative_table.iter().map(|d| format!("{:.3}", d.spread)).collect::<Vec<_>>().join(" ")
    );
    println!("{}", if report.pass { "PASS" } else { "FAIL" });
    let dir = out_dir(g, None);
    write_json(&dir, "validate_dyadic.json", &envelope("validate-dyadic", None, &report)?)?;
    Ok(if report.pass { 0 } else { 1 })
}

fn potential_report(cfg: &RunConfig) -> Result<PotentialReport, CliError> {
    let grid = cfg.grid()?;
    let v = sample_potential(&cfg.potential, &grid)?;
    Ok(hypothesis_check(&v, cfg.rollnik_samples, cfg.seed)?
        .with_source(cfg.potential.describe(), cfg.potential.smoothness()))
}

fn require_3d(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.grid.dim != 3 {
        return Err(schrodecay::Error::NotThreeDimensional(cfg.grid.dim).into());
    }
    Ok(())
}

fn potential_check(g: &Global) -> Result<u8, CliError> {
    let cfg = load_config(g)?;
    require_3d(&cfg)?;
    if g.dry_run {
        return plan(&[
            format!("sample {} on the {}^3 grid", cfg.potential.describe(), cfg.grid.points),
            "Kato norm and profile by FFT convolution".into(),
            format!("Rollnik functional with {} samples, seed {}", cfg.rollnik_samples, cfg.seed),
        ]);
    }
    let report = potential_report(&cfg)?;
    println!("{}", report.summary());
    let dir = out_dir(g, Some(&cfg));
    write_json(&dir, &format!("potential_check_{}.json", cfg.hash()), &envelope("potential-check", Some(&cfg), &report)?)?;
    finish_config(&dir, &cfg)?;
    Ok(if report.hypotheses_met { 0 } else { 1 })
}

fn norm(g: &Global, args: &IndexArgs, which: &str) -> Result<u8, CliError> {
    let cfg = load_config(g)?;
    let idx = BesovIndex::new(args.alpha, args.p, args.q)?;
    let grid = cfg.grid()?;
    let f = load_field(&grid, &args.field)?;
    if g.dry_run {
        return plan(&[
            format!("assemble H for {}", cfg.potential.describe()),
            format!("Littlewood-Paley decomposition of {}", args.field.display()),
            format!("{which} norm with alpha = {}, p = {}, q = {}", idx.alpha, idx.p, idx.q),
        ]);
    }
    let calc = cfg.calculus()?;
    let sys = cfg.dyadic(&calc)?;
    let value = if which == "besov" { besov_norm(&calc, &sys, &f, &idx)? } else { triebel_norm(&calc, &sys, &f, &idx)? };
    println!("{value:.15e}");
    let result = json!({
        "norm": which,
        "index": idx,
        "field": args.field,
        "j_max": sys.j_max(),
        "value": value,
        "expansions_converged": calc.all_converged(),
    });
    let dir = out_dir(g, Some(&cfg));
    write_json(&dir, &format!("{which}_{}.json", cfg.hash()), &envelope(which, Some(&cfg), &result)?)?;
    finish_config(&dir, &cfg)?;
    Ok(0)
}

fn kato(g: &Global, deltas: &[f64]) -> Result<u8, CliError> {
    let cfg = load_config(g)?;
    require_3d(&cfg)?;
    let grid = cfg.grid()?;
    let deltas = if deltas.is_empty() { default_profile_radii(&grid) } else { deltas.to_vec() };
    if g.dry_run {
        return plan(&[format!("Kato norm of {}", cfg.potential.describe()), format!("profile at radii {deltas:?}")]);
    }
    let v = sample_potential(&cfg.potential, &grid)?;
    let k = kato_norm(&v)?;
    let profile = kato_profile(&v, &deltas)?;
    println!("Kato norm {k:.10}  (threshold 4π = {:.6})", schrodecay::norms::KATO_THRESHOLD);
    for (d, kd) in &profile {
        println!("  K({d:.4}) = {kd:.10}");
    }
    let result = json!({ "kato_norm": k, "profile": profile, "below_threshold": k < schrodecay::norms::KATO_THRESHOLD });
    let dir = out_dir(g, Some(&cfg));
    write_json(&dir, &format!("kato_{}.json", cfg.hash()), &envelope("kato", Some(&cfg), &result)?)?;
    finish_config(&dir, &cfg)?;
    Ok(0)
}

fn rollnik(g: &Global, samples: Option<usize>) -> Result<u8, CliError> {
    let cfg = load_config(g)?;
    require_3d(&cfg)?;
    let samples = samples.unwrap_or(cfg.rollnik_samples);
    if g.dry_run {
        return plan(&[format!("Rollnik functional of {} with {samples} samples, seed {}", cfg.potential.describe(), cfg.seed)]);
    }
    let v = sample_potential(&cfg.potential, &cfg.grid()?)?;
    let r = rollnik_functional(&v, samples, cfg.seed)?;
    println!(
        "Rollnik {:.8} ± {:.8}  (threshold (4π)² = {:.6})",
        r.estimate,
        r.stderr,
        schrodecay::norms::ROLLNIK_THRESHOLD
    );
    let dir = out_dir(g, Some(&cfg));
    write_json(&dir, &format!("rollnik_{}.json", cfg.hash()), &envelope("rollnik", Some(&cfg), &r)?)?;
    finish_config(&dir, &cfg)?;
    Ok(0)
}

fn propagate(g: &Global, field: &Path, times: &[f64], method: Method) -> Result<u8, CliError> {
    let cfg = load_config(g)?;
    let grid = cfg.grid()?;
    let f = load_field(&grid, field)?;
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(CliError::Usage("--times must be nonnegative and ascending".into()));
    }
    if g.dry_run {
        return plan(&[
            format!("assemble H for {}", cfg.potential.describe()),
            format!("propagate {} to t = {times:?} with {method:?}", field.display()),
        ]);
    }
    let calc = cfg.calculus()?;
    let method = match method {
        Method::Chebyshev => PropagationMethod::ChebyshevPhase,
        Method::Dense => PropagationMethod::DenseOracle,
    };
    let r = propagate_series(&calc, &f, times, method)?;
    let dir = out_dir(g, Some(&cfg));
    let manifest = write_trajectory(&r, &dir, &format!("trajectory_{}", cfg.hash()))?;
    println!("L2 drift {:.3e}, energy drift {:.3e}; manifest {}", r.l2_drift, r.energy_drift, manifest.display());
    write_json(&dir, &format!("propagate_{}.json", cfg.hash()), &envelope("propagate", Some(&cfg), &r)?)?;
    finish_config(&dir, &cfg)?;
    Ok(if r.converged { 0 } else { 1 })
}

fn experiment(g: &Global) -> Result<u8, CliError> {
    let cfg = load_config(g)?;
    if cfg.experiments.is_empty() {
        return Err(CliError::Usage("config lists no [[experiment]]".into()));
    }
    let grid = cfg.grid()?;
    if g.dry_run {
        let mut steps = vec![format!("assemble H for {} on {:?}", cfg.potential.describe(), cfg.grid)];
        if grid.dim() == 3 {
            steps.push("hypothesis check of the potential".into());
        }
        steps.extend(cfg.experiments.iter().map(|e| format!("{} experiment", e.name())));
        return plan(&steps);
    }
    let hypotheses_met = if grid.dim() == 3 {
        let report = potential_report(&cfg)?;
        if !report.hypotheses_met && !cfg.unguarded {
            return Err(CliError::Validation(format!(
                "potential fails the hypothesis check (Kato {:.4}, Rollnik {:.4}); set unguarded = true to run anyway",
                report.kato_norm, report.rollnik
            )));
        }
        Some(report.hypotheses_met)
    } else {
        None
    };
    let calc = cfg.calculus()?;
    let sys = cfg.dyadic(&calc)?;
    let dir = out_dir(g, Some(&cfg));
    let hash = cfg.hash();
    for (k, e) in cfg.experiments.iter().enumerate() {
        let decay = |field: &crate::config::FieldSpec, run: &dyn Fn(&Setup) -> schrodecay::Result<DecayReport>| {
            let f = field.build(&grid, cfg.seed)?;
            let label = field.describe();
            let setup = Setup { calc: &calc, sys: &sys, f: &f, f_label: &label, hypotheses_met };
            Ok::<_, CliError>(run(&setup)?)
        };
        let stem = format!("{k:02}_{}_{hash}", e.name());
        let result = match e {
            Experiment::ShortTime { field, p, times } => {
                Some(decay(field, &|s| short_time_experiment(s, *p, &times.values()))?)
            }
            Experiment::LongTime { field, p, times, variant, fit_window } => {
                Some(decay(field, &|s| long_time_experiment(s, *p, &times.values(), *variant, *fit_window))?)
            }
            Experiment::Dispersive { field, p, times, fit_window } => {
                Some(decay(field, &|s| dispersive_scan(s, *p, &times.values(), *fit_window))?)
            }
            Experiment::Corollary { field, alpha, p, q, space, times, fit_window } => {
                let idx = BesovIndex::new(*alpha, *p, *q)?;
                Some(decay(field, &|s| corollary_experiment(s, &idx, &times.values(), *space, *fit_window))?)
            }
            Experiment::LemmaJn { fields, p, thetas, times } => {
                let fs = fields.iter().map(|f| f.build(&grid, cfg.seed)).collect::<Result<Vec<_>, _>>()?;
                let r = lemma_jn_scan(&calc, &fs, *p, thetas, &times.values())?;
                println!("{stem}: sup {:.6} at θ = {}, t = {}; θ variation {:.4}", r.sup, r.sup_at.0, r.sup_at.1, r.theta_variation);
                write_json(&dir, &format!("{stem}.json"), &envelope("experiment", Some(&cfg), &r)?)?;
                None
            }
            Experiment::DyadicSplit { field, p, times } => {
                let f = field.build(&grid, cfg.seed)?;
                let reports = times
                    .values()
                    .iter()
                    .map(|&t| dyadic_split_diagnostic(&calc, &sys, &f, t, *p))
                    .collect::<schrodecay::Result<Vec<_>>>()?;
                for r in &reports {
                    println!("{stem}: t = {} j_t = {} defect {:.2e}", r.t, r.split_index, r.reconstruction_defect);
                }
                write_json(&dir, &format!("{stem}.json"), &envelope("experiment", Some(&cfg), &reports)?)?;
                None
            }
        };
        if let Some(report) = result {
            let fit = report
                .fit
                .map(|f| format!("slope {:.4} ± {:.4} (theory {:.4})", f.slope, f.stderr, report.theory_exponent))
                .unwrap_or_else(|| report.fit_refused.clone().unwrap_or_else(|| "no fit requested".into()));
            println!(
                "{stem}: {} rows, sup ratio {}, {fit}",
                report.rows.len(),
                report.sup_ratio.map(|s| format!("{s:.6}")).unwrap_or_else(|| "undefined".into())
            );
            write_json(&dir, &format!("{stem}.json"), &envelope("experiment", Some(&cfg), &report)?)?;
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join(format!("{stem}.csv")), report.to_csv())?;
        }
    }
    finish_config(&dir, &cfg)?;
    Ok(0)
}

fn run_suite(g: &Global, only: &[u32]) -> Result<u8, CliError> {
    let mut opts = SuiteOptions::default();
    if let Some(seed) = g.seed {
        opts.seed = seed;
    }
    let ids: Vec<u32> = if only.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { only.to_vec() };
    if let Some(bad) = ids.iter().find(|id| !CRITERIA.iter().any(|c| c.0 == **id)) {
        return Err(CliError::Usage(format!("no acceptance criterion {bad}")));
    }
    if g.dry_run {
        let steps: Vec<String> =
            CRITERIA.iter().filter(|c| ids.contains(&c.0)).map(|c| format!("criterion {}: {}", c.0, c.1)).collect();
        return plan(&steps);
    }
    let outcomes = if only.is_empty() {
        suite::run_all(&opts)
    } else {
        ids.iter().map(|&id| suite::run(id, &opts)).collect::<schrodecay::Result<Vec<_>>>()?
    };
    for o in &outcomes {
        println!("{}", o.line());
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    write_json(&out_dir(g, None), "suite.json", &envelope("suite", None, &json!({ "options": opts, "outcomes": outcomes }))?)?;
    Ok(if failed == 0 { 0 } else { 1 })
}
