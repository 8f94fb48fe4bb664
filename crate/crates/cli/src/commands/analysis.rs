use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use factsurv::cox::{cox_fit, prepare_covariates, schoenfeld_test, CoxOptions, CoxSummary};
use factsurv::datamodel::{parse_covariates, write_covariates_csv, Dataset, COVARIATES_FILE};
use factsurv::events::{
    build_cohort_with_probes, count_observed, read_events_jsonl, stratify, write_events_jsonl, EventKind,
    EventRecord, EVENTS_FILE,
};
use factsurv::logrank::logrank_test;
use factsurv::probe::read_results;
use factsurv::survival::{km_fit, restricted_mean_time};
use factsurv::velocity::VelocityCurve;
use serde_json::json;
use tracing::{info, warn};

use crate::artifacts::{
    CoxArtifact, EventsSummary, KindCounts, KmArtifact, LogrankArtifact, Meta, Stratum, VelocityArtifact,
    EVENTS_SUMMARY_FILE,
};
use crate::config::Params;
use crate::error::CliError;
use crate::fsio::{json_files, read_json, OutputSet};

const DEFAULT_STRATA: &[&str] = &["latent"];

pub fn extract_events(input: &Path, params: &Params, probes: Option<&Path>) -> Result<OutputSet, CliError> {
    let dataset = Dataset::load_dir(input, params.epochs)?;
    let probe_results = probes.map(read_results).transpose()?;
    let latent_source = if probe_results.is_some() {
        "probes"
    } else if dataset.covariates().is_empty() {
        "none"
    } else {
        "covariates"
    };

    let mut records = Vec::new();
    let mut kinds = BTreeMap::new();
    for kind in EventKind::ALL {
        let cohort = build_cohort_with_probes(&dataset, kind, &[], probe_results.as_deref())?;
        let (observed, censored) = count_observed(&cohort);
        let censored_at_zero = cohort.iter().filter(|r| r.time == 0 && !r.observed).count();
        info!(kind = kind.as_str(), subjects = cohort.len(), observed, "extracted events");
        kinds.insert(
            kind,
            KindCounts {
                subjects: cohort.len(),
                observed,
                censored,
                censored_at_zero,
            },
        );
        records.extend(cohort);
    }

    let mut out = OutputSet::default();
    let mut events = Vec::new();
    write_events_jsonl(&mut events, &records)?;
    out.add(EVENTS_FILE, events);
    if !dataset.covariates().is_empty() {
        let mut covs = Vec::new();
        write_covariates_csv(&mut covs, dataset.covariates())?;
        out.add(COVARIATES_FILE, covs);
    }
    out.add_json(
        EVENTS_SUMMARY_FILE,
        &EventsSummary {
            epochs: dataset.max_epoch(),
            terms: dataset.terms().len(),
            latent_source: latent_source.to_string(),
            kinds,
        },
    )?;
    let meta = Meta::new(
        "extract-events",
        params.seed,
        json!({ "epochs": dataset.max_epoch(), "latent_source": latent_source }),
    );
    out.add_json(meta.path(), &meta)?;
    Ok(out)
}

fn load_events(input: &Path) -> Result<Vec<EventRecord>, CliError> {
    let path = input.join(EVENTS_FILE);
    let file = File::open(&path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(read_events_jsonl(BufReader::new(file))?)
}

fn events_summary(input: &Path) -> Result<EventsSummary, CliError> {
    read_json(&input.join(EVENTS_SUMMARY_FILE))
}

fn cohorts(records: Vec<EventRecord>) -> BTreeMap<EventKind, Vec<EventRecord>> {
    let mut by_kind: BTreeMap<EventKind, Vec<EventRecord>> = BTreeMap::new();
    for r in records {
        by_kind.entry(r.kind).or_default().push(r);
    }
    by_kind
}

/// Explicit strata must exist on every record; default strata are used where present.
fn strata_for(cohort: &[EventRecord], params: &Params) -> Vec<String> {
    match &params.strata {
        Some(keys) => keys.clone(),
        None => DEFAULT_STRATA
            .iter()
            .filter(|k| cohort.iter().all(|r| r.label(k).is_some()))
            .map(|k| k.to_string())
            .collect(),
    }
}

pub fn km(input: &Path, params: &Params) -> Result<OutputSet, CliError> {
    let epochs = match params.epochs {
        Some(e) => e,
        None => events_summary(input)?.epochs,
    };
    let mut out = OutputSet::default();
    for (kind, cohort) in cohorts(load_events(input)?) {
        let mut groups: Vec<(Stratum, Vec<&EventRecord>)> = vec![(Stratum::overall(kind), cohort.iter().collect())];
        for key in strata_for(&cohort, params) {
            for (value, members) in stratify(&cohort, &key)? {
                groups.push((Stratum::labelled(kind, &key, &value), members));
            }
        }
        for (stratum, members) in groups {
            let curve = km_fit(&members, params.alpha)?;
            let artifact = KmArtifact {
                epochs,
                median: curve.median_time(),
                rmst: restricted_mean_time(&curve, epochs).ok(),
                curve,
                stratum,
            };
            let path = format!("km/{}/{}.json", kind, artifact.stratum.file_stem());
            out.add_json(path, &artifact)?;
        }
    }
    let meta = Meta::new(
        "km",
        params.seed,
        json!({ "alpha": params.alpha, "epochs": epochs, "strata": params.strata }),
    );
    out.add_json(meta.path(), &meta)?;
    Ok(out)
}

pub fn logrank(input: &Path, params: &Params) -> Result<OutputSet, CliError> {
    let mut out = OutputSet::default();
    for (kind, cohort) in cohorts(load_events(input)?) {
        for key in strata_for(&cohort, params) {
            let groups = stratify(&cohort, &key)?;
            if groups.len() < 2 {
                warn!(kind = kind.as_str(), key = key.as_str(), "fewer than two strata; log-rank skipped");
                continue;
            }
            let test = logrank_test(&groups)?;
            info!(kind = kind.as_str(), key = key.as_str(), chi2 = test.statistic, p = test.p_value, "log-rank");
            out.add_json(
                format!("logrank/{}__{}.json", kind, crate::fsio::stem(&key)),
                &LogrankArtifact { kind, key, test },
            )?;
        }
    }
    let meta = Meta::new("logrank", params.seed, json!({ "strata": params.strata }));
    out.add_json(meta.path(), &meta)?;
    Ok(out)
}

pub fn cox(input: &Path, params: &Params, kind: Option<EventKind>) -> Result<OutputSet, CliError> {
    let covariates_path = input.join(COVARIATES_FILE);
    let raw = match File::open(&covariates_path) {
        Ok(f) => parse_covariates(BufReader::new(f))?,
        Err(e) => {
            return Err(CliError::Data(format!(
                "cannot read {}: {e}",
                covariates_path.display()
            )))
        }
    };
    let mut by_kind = cohorts(load_events(input)?);
    let selected: Vec<(EventKind, Vec<EventRecord>)> = match kind {
        Some(k) => vec![(k, by_kind.remove(&k).unwrap_or_default())],
        None => by_kind
            .into_iter()
            .filter(|(_, c)| c.iter().any(|r| r.observed))
            .collect(),
    };
    if selected.is_empty() {
        return Err(factsurv::Error::NoEvents.into());
    }
    let names: Vec<String> = params.covariates.iter().map(|s| s.name.clone()).collect();
    let options = CoxOptions::default();
    let mut out = OutputSet::default();
    for (kind, cohort) in selected {
        let (covs, transforms) = prepare_covariates(&cohort, &raw, &params.covariates)?;
        let fit = cox_fit(&cohort, &covs, &names, &options)?;
        let ph = if fit.n_events >= 2 {
            Some(schoenfeld_test(&fit, &cohort, &covs, params.ph_transform)?)
        } else {
            None
        };
        info!(
            kind = kind.as_str(),
            n = fit.n,
            events = fit.n_events,
            iterations = fit.iterations,
            lr = fit.lr_statistic,
            "cox fit"
        );
        out.add_json(
            format!("cox/{kind}.json"),
            &CoxArtifact {
                kind,
                summary: CoxSummary::new(&fit, ph.as_ref(), transforms),
            },
        )?;
    }
    let meta = Meta::new(
        "cox",
        params.seed,
        json!({
            "covariates": names,
            "ties": options.ties,
            "max_iterations": options.max_iterations,
            "ph_transform": params.ph_transform,
        }),
    );
    out.add_json(meta.path(), &meta)?;
    Ok(out)
}

fn kind_dirs(root: &Path) -> Vec<(EventKind, PathBuf)> {
    EventKind::ALL
        .into_iter()
        .map(|k| (k, root.join(k.as_str())))
        .filter(|(_, p)| p.is_dir())
        .collect()
}

pub fn velocity(input: &Path, params: &Params) -> Result<OutputSet, CliError> {
    let mut out = OutputSet::default();
    let km_root = input.join("km");
    if !km_root.is_dir() {
        return Err(CliError::Data(format!("no curves found in {}", km_root.display())));
    }
    for (kind, dir) in kind_dirs(&km_root) {
        for path in json_files(&dir)? {
            let km: KmArtifact = read_json(&path)?;
            let grid = km.curve.accumulation_on_grid(km.epochs);
            let curve = VelocityCurve::from_accumulation(grid, params.sigma, params.epsilon)?;
            out.add_json(
                format!("velocity/{}/{}.json", kind, km.stratum.file_stem()),
                &VelocityArtifact {
                    stratum: km.stratum,
                    curve,
                },
            )?;
        }
    }
    let meta = Meta::new(
        "velocity",
        params.seed,
        json!({ "sigma": params.sigma, "epsilon": params.epsilon }),
    );
    out.add_json(meta.path(), &meta)?;
    Ok(out)
}

pub(crate) fn read_kind_artifacts<T: serde::de::DeserializeOwned>(root: &Path) -> Result<Vec<(EventKind, T)>, CliError> {
    let mut out = Vec::new();
    for (kind, dir) in kind_dirs(root) {
        for path in json_files(&dir)? {
            out.push((kind, read_json(&path)?));
        }
    }
    Ok(out)
}
