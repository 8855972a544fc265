//! The analysis stages and the CSV files they write.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use log::info;
use poptemp::indices::{compute_suite, IndexSuite};
use poptemp::ingest::{read_city_table, read_migration_tables, MigrationStockTable};
use poptemp::migration::{summarize_flows, summarize_stocks, MigrationSummary};
use poptemp::urban::{build_urban_epochs, urban_report, UhiMethod, UrbanReport};
use poptemp::Year;

use crate::bundle::Bundle;
use crate::config::RunConfig;
use crate::output::{num, opt, write_csv, Staging};

pub const INDICES_CSV: &str = "indices.csv";
pub const CHANGES_CSV: &str = "changes.csv";
pub const DECOMPOSITION_CSV: &str = "decomposition.csv";
pub const URBAN_CSV: &str = "urban.csv";
pub const MIGRATION_CSV: &str = "migration.csv";
pub const HISTOGRAM_CSV: &str = "migration_histogram.csv";

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

/// Index series, per-transition changes and the decomposition.
pub fn indices(cfg: &RunConfig, bundle: &Bundle) -> Result<IndexSuite> {
    ensure!(cfg.epochs.len() >= 2, "index changes need at least two epochs");
    let suite = compute_suite(&bundle.temps, &bundle.pops, &bundle.area, cfg.mask_policy, cfg.base_epoch)?;
    let policy = cfg.mask_policy.as_str();
    let base = cfg.base_epoch.to_string();

    let mut header = vec!["epoch", "mask_policy", "base_epoch"];
    header.extend(suite.series().iter().map(|s| s.method().as_str()));
    header.push("excluded_pop_fraction");
    let rows: Vec<Vec<String>> = suite
        .epochs()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut r = vec![e.to_string(), policy.into(), base.clone()];
            r.extend(suite.series().iter().map(|s| num(s.values()[i])));
            r.push(num(suite.excluded_pop_fraction[i]));
            r
        })
        .collect();

    let changes = [
        &suite.area_changes,
        &suite.naive_changes,
        &suite.chained.laspeyres,
        &suite.chained.paasche,
        &suite.chained.fisher,
    ];
    let mut change_header = vec!["epoch_from", "epoch_to", "mask_policy", "base_epoch"];
    change_header.extend(changes.iter().map(|c| c.method().as_str()));
    let transitions: Vec<(Year, Year)> = suite.area_changes.transitions().map(|(a, b, _)| (a, b)).collect();
    let change_rows: Vec<Vec<String>> = transitions
        .iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let mut r = vec![a.to_string(), b.to_string(), policy.into(), base.clone()];
            r.extend(changes.iter().map(|c| num(c.deltas()[i])));
            r
        })
        .collect();
    let decomposition_rows: Vec<Vec<String>> = transitions
        .iter()
        .zip(&suite.decomposition)
        .map(|((a, b), d)| {
            vec![
                a.to_string(),
                b.to_string(),
                policy.into(),
                base.clone(),
                num(d.total),
                num(d.pure_temp),
                num(d.composition),
                num(d.residual),
            ]
        })
        .collect();

    let mut staging = Staging::new();
    staging.write(&out(cfg, INDICES_CSV), |w| write_csv(w, &header, &rows))?;
    staging.write(&out(cfg, CHANGES_CSV), |w| write_csv(w, &change_header, &change_rows))?;
    staging.write(&out(cfg, DECOMPOSITION_CSV), |w| {
        write_csv(
            w,
            &["epoch_from", "epoch_to", "mask_policy", "base_epoch", "total", "pure_temp", "composition", "residual"],
            &decomposition_rows,
        )
    })?;
    staging.commit()?;
    info!("wrote {INDICES_CSV}, {CHANGES_CSV} and {DECOMPOSITION_CSV} in {}", cfg.output_dir.display());
    Ok(suite)
}

fn uhi_method_name(m: UhiMethod) -> &'static str {
    match m {
        UhiMethod::Laspeyres => "laspeyres_chained",
        UhiMethod::Paasche => "paasche_chained",
        UhiMethod::Fisher => "fisher_chained",
    }
}

/// Chained series with and without the urban heat island adjustment.
pub fn urban(cfg: &RunConfig, bundle: &Bundle) -> Result<UrbanReport> {
    let Some(path) = &cfg.city_table else {
        bail!("urban needs city_table in the config");
    };
    ensure!(cfg.epochs.len() >= 2, "urban changes need at least two epochs");
    let file = File::open(path).with_context(|| format!("opening city table {}", path.display()))?;
    let cities = read_city_table(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    let urban = build_urban_epochs(&cities, &bundle.pops, &cfg.uhi)?;
    if urban.is_empty() {
        log::warn!("the city table shares no epochs with the analysis; adjusted series equals unadjusted");
    }
    let report = urban_report(&bundle.temps, &bundle.pops, &urban, cfg.uhi_method, cfg.mask_policy, cfg.base_epoch)?;

    let header = [
        "epoch",
        "mask_policy",
        "base_epoch",
        "method",
        "unadjusted",
        "adjusted",
        "difference",
        "urban_share",
        "mean_urban_uhi",
        "uhi_level_contribution",
        "capped_cells",
        "uhi_change_index",
        "uhi_change_contribution",
    ];
    let rows: Vec<Vec<String>> = cfg
        .epochs
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let d = report.diagnostics[i];
            // Transition ending at this epoch, where it was adjusted.
            let (idx, contrib) = match i.checked_sub(1) {
                Some(k) if report.changes.urban_share[k].is_some() => (
                    Some(report.changes.uhi_index.deltas()[k]),
                    Some(report.changes.uhi_contribution.deltas()[k]),
                ),
                _ => (None, None),
            };
            vec![
                e.to_string(),
                cfg.mask_policy.as_str().into(),
                cfg.base_epoch.to_string(),
                uhi_method_name(cfg.uhi_method).into(),
                num(report.unadjusted.values()[i]),
                num(report.adjusted.values()[i]),
                num(report.difference[i]),
                opt(d.map(|d| d.urban_share)),
                opt(d.map(|d| d.mean_urban_uhi)),
                opt(d.map(|d| d.level_contribution)),
                d.map(|d| d.capped_cells.to_string()).unwrap_or_default(),
                opt(idx),
                opt(contrib),
            ]
        })
        .collect();
    let mut staging = Staging::new();
    staging.write(&out(cfg, URBAN_CSV), |w| write_csv(w, &header, &rows))?;
    staging.commit()?;
    info!("wrote {URBAN_CSV} in {}", cfg.output_dir.display());
    Ok(report)
}

fn load_migration_tables(cfg: &RunConfig) -> Result<MigrationStockTable> {
    let (Some(stocks), Some(temps)) = (&cfg.migration_stocks, &cfg.country_temperatures) else {
        bail!("migration needs migration_stocks and country_temperatures in the config");
    };
    let open = |p: &PathBuf| File::open(p).with_context(|| format!("opening {}", p.display()));
    let pops = cfg.country_populations.as_ref().map(open).transpose()?;
    let table = read_migration_tables(BufReader::new(open(stocks)?), BufReader::new(open(temps)?), pops.map(BufReader::new))
        .context("reading migration tables")?;
    Ok(table)
}

/// Flow and stock summaries with their histograms.
pub fn migration(cfg: &RunConfig) -> Result<Vec<MigrationSummary>> {
    let table = load_migration_tables(cfg)?;
    let epochs = cfg
        .migration_epochs
        .clone()
        .unwrap_or_else(|| table.stock_epochs().to_vec());
    if let Some(e) = epochs.iter().find(|e| !table.stock_epochs().contains(e)) {
        bail!("migration epoch {e} has no stock data");
    }
    let w = cfg.histogram_bin_width;
    let mut summaries = Vec::new();
    for pair in epochs.windows(2) {
        summaries.push(summarize_flows(&table, pair[0], pair[1], w)?);
    }
    for &e in &epochs {
        summaries.push(summarize_stocks(&table, e, w)?);
    }

    let header = [
        "view",
        "epoch_from",
        "epoch_to",
        "mask_policy",
        "base_epoch",
        "total_migrants",
        "clamped_total",
        "mean_delta",
        "world_pop",
        "migrant_share",
        "adjustment",
        "cumulative_adjustment",
        "share_within_2",
        "share_beyond_10",
        "share_cooling",
    ];
    let mut cumulative = Some(0.0);
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| {
            let cum = match s.view {
                poptemp::migration::View::Flow => {
                    cumulative = cumulative.zip(s.adjustment).map(|(c, a)| c + a);
                    cumulative
                }
                poptemp::migration::View::Stock => None,
            };
            vec![
                s.view.as_str().into(),
                s.epoch_from.to_string(),
                s.epoch_to.to_string(),
                cfg.mask_policy.as_str().into(),
                cfg.base_epoch.to_string(),
                num(s.total_migrants),
                num(s.clamped_total),
                opt(s.mean_delta),
                opt(s.world_pop),
                opt(s.migrant_share),
                opt(s.adjustment),
                opt(cum),
                num(s.histogram.share_within_2),
                num(s.histogram.share_beyond_10),
                num(s.histogram.share_cooling),
            ]
        })
        .collect();
    let bins: Vec<Vec<String>> = summaries
        .iter()
        .flat_map(|s| {
            s.histogram.bins.iter().map(move |b| {
                vec![
                    s.view.as_str().into(),
                    s.epoch_from.to_string(),
                    s.epoch_to.to_string(),
                    num(b.lower),
                    num(b.upper),
                    num(b.migrants),
                    num(b.share),
                ]
            })
        })
        .collect();
    let mut staging = Staging::new();
    staging.write(&out(cfg, MIGRATION_CSV), |w| write_csv(w, &header, &rows))?;
    staging.write(&out(cfg, HISTOGRAM_CSV), |w| {
        write_csv(
            w,
            &["view", "epoch_from", "epoch_to", "bin_lower", "bin_upper", "migrants", "share"],
            &bins,
        )
    })?;
    staging.commit()?;
    info!("wrote {MIGRATION_CSV} and {HISTOGRAM_CSV} in {}", cfg.output_dir.display());
    Ok(summaries)
}

/// Every stage the config has inputs for.
pub fn all(cfg: &RunConfig) -> Result<()> {
    crate::bundle::prepare(cfg)?;
    let bundle = Bundle::load(cfg)?;
    indices(cfg, &bundle)?;
    if cfg.city_table.is_some() {
        urban(cfg, &bundle)?;
    } else {
        info!("no city_table; skipping urban");
    }
    if cfg.migration_stocks.is_some() {
        migration(cfg)?;
    } else {
        info!("no migration_stocks; skipping migration");
    }
    Ok(())
}
