mod analysis;
mod report;

use std::path::Path;

use factsurv::datamodel::{parse_terms, InputFormat, TERMS_FILE};
use factsurv::events::EventKind;
use factsurv::probe::{run_campaign, HttpBackend, PROBE_RESULTS_FILE};
use factsurv::simulate::{simulate, BaselineHazard};
use serde_json::json;
use tracing::info;

use crate::args::{Command, Io, PipelineArgs, ProbeArgs, SimulateArgs};
use crate::artifacts::Meta;
use crate::config::{FileConfig, Overrides, Params};
use crate::error::CliError;
use crate::fsio::{DirLock, OutputSet};

pub fn run(command: Command, file: &FileConfig) -> Result<(), CliError> {
    match command {
        Command::Probe(args) => probe(args, file),
        Command::Simulate(args) => simulate_cmd(args, file),
        Command::Pipeline(args) => pipeline(args, file),
        Command::ExtractEvents(a) => {
            let params = Params::resolve(file, Overrides { epochs: a.epochs, seed: a.io.seed, ..Default::default() })?;
            single(&a.io, |input| analysis::extract_events(input, &params, a.probes.as_deref()))
        }
        Command::Km(a) => {
            let params = Params::resolve(
                file,
                Overrides {
                    epochs: a.epochs,
                    alpha: a.alpha,
                    strata: a.strata.strata.clone(),
                    seed: a.io.seed,
                    ..Default::default()
                },
            )?;
            single(&a.io, |input| analysis::km(input, &params))
        }
        Command::Logrank(a) => {
            let params = Params::resolve(
                file,
                Overrides { strata: a.strata.strata.clone(), seed: a.io.seed, ..Default::default() },
            )?;
            single(&a.io, |input| analysis::logrank(input, &params))
        }
        Command::Cox(a) => {
            let params = Params::resolve(
                file,
                Overrides {
                    covariates: a.covariates.clone(),
                    ph_transform: a.ph_transform.clone(),
                    seed: a.io.seed,
                    ..Default::default()
                },
            )?;
            let kind = a
                .kind
                .as_deref()
                .map(str::parse::<EventKind>)
                .transpose()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            single(&a.io, |input| analysis::cox(input, &params, kind))
        }
        Command::Velocity(a) => {
            let params = Params::resolve(
                file,
                Overrides { sigma: a.sigma, epsilon: a.epsilon, seed: a.io.seed, ..Default::default() },
            )?;
            single(&a.io, |input| analysis::velocity(input, &params))
        }
        Command::Report(a) => {
            let params = Params::resolve(
                file,
                Overrides { significance: a.significance, seed: a.io.seed, ..Default::default() },
            )?;
            single(&a.io, |input| report::report(input, &params))
        }
    }
}

/// Computes a command's outputs in memory, then writes them under the lock.
fn single(io: &Io, step: impl FnOnce(&Path) -> Result<OutputSet, CliError>) -> Result<(), CliError> {
    let _lock = DirLock::acquire(&io.out)?;
    let outputs = step(&io.input)?;
    outputs.write_to(&io.out)?;
    info!(files = outputs.len(), out = %io.out.display(), "outputs written");
    Ok(())
}

fn pipeline(args: PipelineArgs, file: &FileConfig) -> Result<(), CliError> {
    let params = Params::resolve(
        file,
        Overrides {
            epochs: args.epochs,
            alpha: args.alpha,
            sigma: args.sigma,
            epsilon: args.epsilon,
            strata: args.strata.strata.clone(),
            covariates: args.covariates.clone(),
            ph_transform: args.ph_transform.clone(),
            seed: args.io.seed,
            significance: args.significance,
        },
    )?;
    let _lock = DirLock::acquire(&args.io.out)?;
    // steps read their predecessors' outputs from a private staging directory
    let staging = tempfile::Builder::new()
        .prefix(".staging-")
        .tempdir_in(&args.io.out)?;
    let stage = staging.path();
    let mut all = OutputSet::default();
    let mut apply = |outputs: OutputSet| -> Result<(), CliError> {
        outputs.write_to(stage)?;
        all.extend(outputs);
        Ok(())
    };
    apply(analysis::extract_events(&args.io.input, &params, args.probes.as_deref())?)?;
    apply(analysis::km(stage, &params)?)?;
    apply(analysis::logrank(stage, &params)?)?;
    apply(analysis::cox(stage, &params, None)?)?;
    apply(analysis::velocity(stage, &params)?)?;
    apply(report::report(stage, &params)?)?;
    all.write_to(&args.io.out)?;
    info!(files = all.len(), out = %args.io.out.display(), "pipeline complete");
    Ok(())
}

fn simulate_cmd(args: SimulateArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut config = file.sim_config()?;
    if let Some(seed) = args.seed.or(file.seed) {
        config.seed = seed;
    }
    if let Some(n) = args.n {
        config.n_terms = n;
    }
    if let Some(e) = args.epochs.or(file.epochs) {
        config.epochs = e;
    }
    if let Some(h) = args.hazard {
        config.baseline_hazard = BaselineHazard::Constant(h);
    }
    if let Some(p) = args.latent_prevalence {
        config.covariates.latent_prevalence = p;
    }
    if let Some(f) = args.baseline_correct_fraction {
        config.baseline_correct_fraction = f;
    }
    if args.degrade {
        config.degrade = true;
    }
    if args.flip_epoch.is_some() {
        config.flip_epoch = args.flip_epoch;
    }
    for item in &args.beta {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--beta expects field=value, got {item:?}")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("invalid beta value in {item:?}")))?;
        config.beta.insert(name.trim().to_string(), value);
    }
    config.validate()?;

    let _lock = DirLock::acquire(&args.out)?;
    let output = simulate(&config)?;
    let mut set = OutputSet::default();
    for (name, bytes) in output.files()? {
        set.add(name, bytes);
    }
    set.write_to(&args.out)?;
    info!(terms = config.n_terms, seed = config.seed, out = %args.out.display(), "simulated dataset written");
    Ok(())
}

fn probe(args: ProbeArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut config = file.probe_config()?;
    if let Some(e) = args.endpoint {
        config.endpoint_url = e;
    }
    if let Some(m) = args.model {
        config.model_name = m;
    }
    if let Some(n) = args.n_stochastic {
        config.n_stochastic = n;
    }
    if let Some(p) = args.max_parallel {
        config.max_parallel = p;
    }
    if args.audit {
        config.audit = true;
    }
    config.validate()?;
    let seed = args.io.seed.or(file.seed).unwrap_or(0);

    let terms_path = args.io.input.join(TERMS_FILE);
    let terms_file = std::fs::File::open(&terms_path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", terms_path.display())))?;
    let terms = parse_terms(std::io::BufReader::new(terms_file), InputFormat::Jsonl)?;

    let _lock = DirLock::acquire(&args.io.out)?;
    let backend = HttpBackend::new(&config)?;
    // the results file is append-only so an interrupted campaign can resume
    let results = run_campaign(&terms, &config, &backend, &args.io.out.join(PROBE_RESULTS_FILE))?;
    let latent = results.iter().filter(|r| r.latent).count();
    info!(terms = results.len(), latent, "probe campaign complete");

    let mut set = OutputSet::default();
    let mut echo = serde_json::to_value(&config).map_err(|e| CliError::Data(e.to_string()))?;
    echo["requests_per_term"] = json!(1 + config.n_stochastic);
    let meta = Meta::new("probe", seed, echo);
    set.add_json(meta.path(), &meta)?;
    set.write_to(&args.io.out)
}
