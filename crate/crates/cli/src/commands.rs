use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use framing_core::eval::{evaluate, holdout_cv, out_of_sample_filter, CvReport, MetricsTable, Scope};
use framing_core::framing::{
    contour_area, contour_grid, counterfactual_table, format_area, framing_report, write_summaries_csv, ContourSpec,
    FramingModel, Matchup,
};
use framing_core::locgam::{
    fit_all_hgams, hgam_training_set, prediction_grid, write_prediction_grid, HandCombo, LocationModel, LocationSource,
};
use framing_core::model::{build_instance, count_parameters, Dataset, ModelId, ModelInstance};
use framing_core::pitchdata::{
    average_zone, empirical_heatmap, filter_frameable, load_pitches, save_pitches, write_heatmap, PitchRecord,
    StrikeZone, FRAMEABLE_REACH_FT,
};
use framing_core::runvalue::{run_expectancy_table, weighted_average_strike_value, RunValueTable};
use framing_core::sampler::{check_convergence, sample_model, write_draws, DrawsMetadata, PosteriorDraws};
use framing_core::synth::generate_calls;
use log::info;
use serde::Serialize;

use crate::artifacts::{create, write_json, write_text, LocationArtifact, SavedModel, Workspace};
use crate::config::RunConfig;

/// A numerical failure that is not a library error, such as a failed convergence check.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    pub ws: Workspace,
}

fn in_window(season: i32, [lo, hi]: [i32; 2]) -> bool {
    season >= lo && season <= hi
}

/// Taken, frameable model-season pitches with their location covariates.
fn model_data(cx: &Run) -> Result<(Dataset, StrikeZone, LocationArtifact)> {
    let season = cx.cfg.data.model_season;
    let pitches = cx.ws.pitches()?;
    let zone = cx.ws.zone()?;
    let location = cx.ws.location()?;
    let taken: Vec<PitchRecord> = pitches
        .into_iter()
        .filter(|p| p.season == season && p.call.is_some())
        .collect();
    let frameable = filter_frameable(&taken, &zone);
    if frameable.is_empty() {
        bail!("no taken, frameable pitches in season {season}");
    }
    let covariates = location.covariates(&frameable)?;
    let data = Dataset::new(frameable, covariates, location.mu_lo())?;
    Ok((data, zone, location))
}

pub fn ingest(cx: &Run) -> Result<()> {
    let Some(train) = &cx.cfg.data.train else {
        bail!("no input corpus; set data.train in the config or pass --input");
    };
    let summary = ingest_file(train, &cx.ws.path("pitches.csv"))?;
    let test = match &cx.cfg.data.test {
        Some(test) => Some(ingest_file(test, &cx.ws.path("test_pitches.csv"))?),
        None => None,
    };
    write_json(&cx.ws.path("ingest.json"), &IngestReport { train: summary, test })
}

#[derive(Serialize)]
struct IngestReport {
    train: IngestSummary,
    test: Option<IngestSummary>,
}

#[derive(Serialize)]
struct IngestSummary {
    source: String,
    total_rows: usize,
    accepted: usize,
    rejected: usize,
    taken: usize,
    seasons: BTreeMap<i32, usize>,
    /// The first rejected rows, with reasons.
    errors: Vec<String>,
}

fn ingest_file(source: &Path, dest: &Path) -> Result<IngestSummary> {
    let loaded = load_pitches(source, None).with_context(|| format!("ingesting {}", source.display()))?;
    let mut seasons = BTreeMap::new();
    for p in &loaded.records {
        *seasons.entry(p.season).or_insert(0) += 1;
    }
    save_pitches(dest, &loaded.records)?;
    info!(
        "{}: {} of {} rows accepted",
        source.display(),
        loaded.records.len(),
        loaded.total_rows
    );
    Ok(IngestSummary {
        source: source.display().to_string(),
        total_rows: loaded.total_rows,
        accepted: loaded.records.len(),
        rejected: loaded.rejected.len(),
        taken: loaded.records.iter().filter(|p| p.taken).count(),
        seasons,
        errors: loaded.rejected.iter().take(50).map(ToString::to_string).collect(),
    })
}

pub fn zone(cx: &Run) -> Result<()> {
    let season = cx.cfg.data.model_season;
    let pitches: Vec<PitchRecord> = cx.ws.pitches()?.into_iter().filter(|p| p.season == season).collect();
    let zone = average_zone(&pitches).with_context(|| format!("average zone of season {season}"))?;
    let heat = empirical_heatmap(
        &pitches,
        cx.cfg.heatmap.cell_size_in,
        &zone.reach_box(FRAMEABLE_REACH_FT, 0.0),
    )?;
    write_json(&cx.ws.path("zone.json"), &zone)?;
    write_heatmap(create(&cx.ws.path("heatmap.csv"))?, &heat)?;
    info!("average zone {:.4}..{:.4} ft", zone.bottom, zone.top);
    Ok(())
}

pub fn fit_gam(cx: &Run) -> Result<()> {
    let cfg = cx.cfg;
    let pitches = cx.ws.pitches()?;
    let zone = cx.ws.zone()?;
    let training: Vec<PitchRecord> = hgam_training_set(&pitches, cfg.data.model_season)
        .into_iter()
        .filter(|p| in_window(p.season, cfg.data.gam_seasons))
        .collect();
    if training.is_empty() {
        let [a, b] = cfg.data.gam_seasons;
        bail!("no taken pitches in seasons {a}..{b} to fit the location surfaces");
    }
    info!("fitting location surfaces on {} pitches", training.len());
    let surfaces = fit_all_hgams(&training, &zone, &cfg.gam)?;
    let season: Vec<PitchRecord> = pitches
        .into_iter()
        .filter(|p| p.season == cfg.data.model_season && p.call.is_some())
        .collect();
    let frameable = filter_frameable(&season, &zone);
    let (model, _) = LocationModel::standardized_on(surfaces, &frameable)?;
    for (combo, surface) in HandCombo::ALL.iter().zip(&model.surfaces) {
        let grid = prediction_grid(surface, cfg.heatmap.grid_nx, cfg.heatmap.grid_nz)?;
        let path = cx.ws.path(&format!("gam_grid_{}.csv", combo.label()));
        write_prediction_grid(create(&path)?, &grid)?;
        info!("{}: lambda {}", combo.label(), surface.lambda);
    }
    write_json(&cx.ws.path("location.json"), &LocationArtifact::Gam(model))
}

fn fit_model(cx: &Run, model: ModelId, data: &Dataset) -> Result<(ModelInstance, PosteriorDraws)> {
    let spec = cx.cfg.spec(model);
    let instance = build_instance(data, &spec, &cx.cfg.prior.baselines)?;
    let sampler = cx.cfg.sampler_for(model);
    info!(
        "{model}: {} coordinates, {} pitches, {} chains of {} iterations",
        instance.dim(),
        instance.n_pitches(),
        sampler.n_chains,
        sampler.n_total
    );
    let draws = sample_model(&instance, &sampler)?;
    let dir = cx.ws.model_dir(model)?;
    write_draws(dir.join("draws.bin"), &draws)?;
    DrawsMetadata::new(&draws, Some(&sampler)).save(dir.join("draws.json"))?;
    instance.index.write_json(create(&dir.join("index.json"))?)?;
    write_json(
        &dir.join("model.json"),
        &SavedModel {
            spec,
            index: instance.index.clone(),
        },
    )?;
    for (c, s) in draws.stats.iter().enumerate() {
        info!(
            "{model} chain {c}: step size {:.4}, mean acceptance {:.3}, {} divergent",
            s.step_size,
            s.mean_accept(),
            s.n_divergent()
        );
    }
    Ok((instance, draws))
}

pub fn fit(cx: &Run) -> Result<()> {
    let (data, _, _) = model_data(cx)?;
    fit_model(cx, cx.cfg.model, &data)?;
    Ok(())
}

pub fn diagnose(cx: &Run) -> Result<()> {
    let model = cx.cfg.model;
    let fit = cx.ws.fit(model)?;
    let report = check_convergence(&fit.draws);
    let dir = cx.ws.model_dir(model)?;
    write_json(&dir.join("diagnostics.json"), &report)?;
    let table = report.table();
    write_text(&dir.join("diagnostics.txt"), &table)?;
    print!("{table}");
    if !report.pass {
        return Err(NumericalFailure(format!(
            "{model} failed the convergence check ({} coordinates)",
            report.failing.len()
        ))
        .into());
    }
    Ok(())
}

/// Taken, frameable test pitches whose participants all appear in `train`.
fn test_data(cx: &Run, train: &Dataset, zone: &StrikeZone, location: &LocationArtifact) -> Result<Option<Dataset>> {
    let Some(test) = cx.ws.test_pitches()? else {
        return Ok(None);
    };
    let taken: Vec<PitchRecord> = test.into_iter().filter(|p| p.call.is_some()).collect();
    let frameable = filter_frameable(&taken, zone);
    let covariates = location.covariates(&frameable)?;
    let all = Dataset::new(frameable, covariates, location.mu_lo())?;
    Ok(Some(out_of_sample_filter(&train.pitches, &all)))
}

pub fn evaluate_cmd(cx: &Run) -> Result<()> {
    let model = cx.cfg.model;
    let fit = cx.ws.fit(model)?;
    let (data, zone, location) = model_data(cx)?;
    let instance = fit.instance(&data)?;
    let name = model.to_string();
    let dir = cx.ws.model_dir(model)?;
    let table = evaluate(&name, &fit.draws, &instance, &data, &zone, cx.cfg.eval.threshold)?;
    table.save_csv(dir.join("metrics.csv"))?;
    write_json(&dir.join("metrics.json"), &table)?;
    if let Some(test) = test_data(cx, &data, &zone, &location)? {
        if test.is_empty() {
            log::warn!("no test pitches have every participant in the training season");
        } else {
            let table = evaluate(&name, &fit.draws, &instance, &test, &zone, cx.cfg.eval.threshold)?;
            table.save_csv(dir.join("metrics_test.csv"))?;
        }
    }
    Ok(())
}

fn run_cv(cx: &Run, model: ModelId, data: &Dataset, zone: &StrikeZone) -> Result<CvReport> {
    let report = holdout_cv(
        data,
        &cx.cfg.spec(model),
        &cx.cfg.prior.baselines,
        &cx.cfg.sampler_for(model),
        zone,
        &cx.cfg.cv(),
    )?;
    let dir = cx.ws.model_dir(model)?;
    write_json(&dir.join("cv.json"), &report)?;
    report.mean.save_csv(dir.join("cv.csv"))?;
    Ok(report)
}

pub fn cv(cx: &Run) -> Result<()> {
    let (data, zone, _) = model_data(cx)?;
    run_cv(cx, cx.cfg.model, &data, &zone)?;
    Ok(())
}

#[derive(Serialize)]
struct RunValueSummary {
    seasons: [i32; 2],
    n_pitches: usize,
    weighted_average_strike_value: f64,
}

pub fn runvalues(cx: &Run) -> Result<()> {
    let window = cx.cfg.data.rv_seasons;
    let pitches: Vec<PitchRecord> = cx
        .ws
        .pitches()?
        .into_iter()
        .filter(|p| p.call.is_some() && in_window(p.season, window))
        .collect();
    let table = run_expectancy_table(&pitches)?;
    table.save_csv(cx.ws.path("runvalues.csv"))?;
    let avg = weighted_average_strike_value(&table);
    info!("weighted average value of a called strike: {avg:.4} runs");
    write_json(
        &cx.ws.path("runvalues.json"),
        &RunValueSummary {
            seasons: window,
            n_pitches: pitches.len(),
            weighted_average_strike_value: avg,
        },
    )
}

pub fn metrics(cx: &Run) -> Result<()> {
    let model = cx.cfg.model;
    let fit = cx.ws.fit(model)?;
    let rv = RunValueTable::load_csv(cx.ws.require("runvalues.csv", "runvalues")?)?;
    let (data, _, _) = model_data(cx)?;
    let instance = fit.instance(&data)?;
    let framing = FramingModel::new(&instance, &rv);
    let report = framing_report(&framing, &fit.draws, &data, &cx.cfg.framing)?;
    let dir = cx.ws.model_dir(model)?;
    write_summaries_csv(create(&dir.join("rs.csv"))?, &report.rs)?;
    write_summaries_csv(create(&dir.join("cafe.csv"))?, &report.cafe)?;
    write_json(&dir.join("framing.json"), &report)
}

#[derive(Serialize)]
struct ContourReport {
    spec: ContourSpec,
    areas: Vec<ContourArea>,
}

#[derive(Serialize)]
struct ContourArea {
    level: f64,
    square_feet: f64,
    label: String,
}

pub fn contours(cx: &Run) -> Result<()> {
    let model = cx.cfg.model;
    let fit = cx.ws.fit(model)?;
    let (data, zone, location) = model_data(cx)?;
    let instance = fit.instance(&data)?;
    let c = &cx.cfg.contours;
    let spec = ContourSpec {
        batter: c.batter.clone(),
        pitcher: c.pitcher.clone(),
        combo: c.combo(),
        catcher: c.catcher.clone(),
        umpire: c.umpire.clone(),
        count: cx.cfg.contour_count()?,
    };
    let bbox = zone.reach_box(FRAMEABLE_REACH_FT, 0.0);
    let grid = contour_grid(
        &instance,
        &location,
        &spec,
        &fit.draws,
        bbox,
        c.nx,
        c.nz,
        cx.cfg.framing.thin,
    )?;
    let areas = c
        .levels
        .iter()
        .map(|&level| {
            let a = contour_area(&grid, level)?;
            Ok(ContourArea {
                level,
                square_feet: a,
                label: format_area(a),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = cx.ws.model_dir(model)?;
    grid.write_csv(create(&dir.join("contour.csv"))?)?;
    write_json(&dir.join("contour.json"), &ContourReport { spec, areas })
}

pub fn counterfactual(cx: &Run) -> Result<()> {
    let model = cx.cfg.model;
    let fit = cx.ws.fit(model)?;
    let (data, _, _) = model_data(cx)?;
    let instance = fit.instance(&data)?;
    let c = &cx.cfg.counterfactual;
    let catchers = if c.catchers.is_empty() {
        instance.index.catchers.ids.clone()
    } else {
        c.catchers.clone()
    };
    let matchup = Matchup {
        batter: c.batter.clone(),
        pitcher: c.pitcher.clone(),
        combo: c.combo(),
        lo: c.lo,
    };
    let table = counterfactual_table(
        &instance,
        &fit.draws,
        &matchup,
        &catchers,
        &cx.cfg.counterfactual_counts()?,
        cx.cfg.framing.thin,
    )?;
    let dir = cx.ws.model_dir(model)?;
    table.write_csv(create(&dir.join("counterfactual.csv"))?)?;
    write_json(&dir.join("counterfactual.json"), &table)
}

pub fn simulate(cx: &Run) -> Result<()> {
    let sim = &cx.cfg.simulate;
    if sim.season != cx.cfg.data.model_season {
        bail!(
            "simulate.season {} differs from data.model_season {}",
            sim.season,
            cx.cfg.data.model_season
        );
    }
    let corpus = generate_calls(sim)?;
    save_pitches(cx.ws.path("pitches.csv"), &corpus.pitches)?;
    corpus.truth.save_json(cx.ws.path("truth.json"))?;
    let zone = corpus.truth.location.surfaces[0].zone;
    write_json(&cx.ws.path("zone.json"), &zone)?;
    write_json(
        &cx.ws.path("location.json"),
        &LocationArtifact::Synthetic(corpus.truth.location.clone()),
    )?;
    info!(
        "simulated {} pitches from {} ({} in season {})",
        corpus.pitches.len(),
        sim.model,
        corpus.season_pitches().len(),
        sim.season
    );
    Ok(())
}

const TABLE_HEADER: [&str; 8] = [
    "model",
    "parameters",
    "overall_miss",
    "overall_mse",
    "region1_miss",
    "region1_mse",
    "region2_miss",
    "region2_mse",
];

/// One row per model with miss rate and MSE for every scope.
fn write_wide_table(path: &Path, rows: &[(ModelId, usize, MetricsTable)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(TABLE_HEADER)?;
    for (model, params, table) in rows {
        let name = model.to_string();
        let mut rec = vec![name.clone(), params.to_string()];
        for scope in Scope::ALL {
            match table.get(scope, &name) {
                Some(r) => rec.extend([r.miss_rate.to_string(), r.mse.to_string()]),
                None => rec.extend(["NA".to_string(), "NA".to_string()]),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn compare(cx: &Run) -> Result<()> {
    let (data, zone, location) = model_data(cx)?;
    let test = test_data(cx, &data, &zone, &location)?.filter(|t| !t.is_empty());
    let threshold = cx.cfg.eval.threshold;
    let mut in_sample = Vec::new();
    let mut held_out = Vec::new();
    let mut future = Vec::new();
    for model in ModelId::ALL {
        let (instance, draws) = fit_model(cx, model, &data)?;
        let index = &instance.index;
        let params = count_parameters(
            &instance.spec,
            index.umpires.len(),
            index.catchers.len(),
            index.pitchers.len(),
            index.batters.len(),
            index.counts.len(),
        );
        let name = model.to_string();
        in_sample.push((
            model,
            params,
            evaluate(&name, &draws, &instance, &data, &zone, threshold)?,
        ));
        held_out.push((model, params, run_cv(cx, model, &data, &zone)?.mean));
        if let Some(test) = &test {
            future.push((
                model,
                params,
                evaluate(&name, &draws, &instance, test, &zone, threshold)?,
            ));
        }
    }
    let dir = cx.ws.compare_dir()?;
    write_wide_table(&dir.join("in_sample.csv"), &in_sample)?;
    write_wide_table(&dir.join("cross_validation.csv"), &held_out)?;
    if !future.is_empty() {
        write_wide_table(&dir.join("out_of_sample.csv"), &future)?;
    }
    let mut long = MetricsTable::default();
    for (_, _, t) in &in_sample {
        long.extend(t.clone());
    }
    long.sorted().save_csv(dir.join("in_sample_long.csv"))?;
    Ok(())
}
