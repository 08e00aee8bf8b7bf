//! One function per subcommand.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rclab::lattice::{build_block, build_box, build_rectangle, build_slab, BondScope, Region};
use rclab::observables::{
    batch_means, eval_unchecked, mixing_setup, surface_tension_estimate, EstimateRow, EventSpec, HashedField, McConfig,
    TensionConfig,
};
use rclab::rcmodel::{write_snapshot, BondConfig, BoundaryCondition, RCParams};
use rclab::renorm::{
    calibrate_block, estimate_alpha, grow_cluster, growth_json, growth_svg, inspection_events, site_percolation_threshold,
    verify_renormalized_path, Calibration, RenormError, RenormSpec,
};
use rclab::rng::{replica_stream, stream_id};
use rclab::sampler::{enumerate_exact, run_chain, ChainState, ExactError, Kernel, Schedule};
use rclab::stats::{BatchSeries, Estimate};
use rclab::threshold::{estimate_box_threshold, estimate_slab_threshold, BisectionConfig};
use serde_json::json;

use crate::config::{Command, ExperimentConfig};
use crate::error::CliError;
use crate::output::{Difference, Entry, Out, Partial};

type Observer<'a> = dyn Fn(&mut ChainState) -> Vec<f64> + Sync + 'a;

pub fn run(cfg: &ExperimentConfig, out_dir: &Path, files: &[PathBuf]) -> Result<(), CliError> {
    let mut out = Out::new(out_dir)?;
    match cfg.command() {
        Command::Sample => sample(cfg, &mut out)?,
        Command::Crossing => crossing(cfg, &mut out)?,
        Command::Tension => tension(cfg, &mut out)?,
        Command::Mixing => mixing(cfg, &mut out)?,
        Command::Blocks => blocks(cfg, &mut out)?,
        Command::Renorm => return renorm(cfg, out),
        Command::Threshold => threshold(cfg, &mut out)?,
        Command::Oracle => oracle(cfg, &mut out)?,
        Command::Merge => return merge(cfg, out, files),
    }
    out.finish(cfg)
}

fn params(cfg: &ExperimentConfig) -> Result<RCParams, CliError> {
    RCParams::new(cfg.q_value(), cfg.p_value()).map_err(|e| CliError::Config(e.to_string()))
}

fn kernel(cfg: &ExperimentConfig, params: &RCParams) -> Result<Kernel, CliError> {
    let k = match cfg.kernel.as_deref().unwrap_or("auto") {
        "heat-bath" => Kernel::HeatBath,
        "cluster" => Kernel::Cluster,
        "product" => Kernel::Product,
        _ => Kernel::auto(params),
    };
    if k == Kernel::Cluster && params.integer_q().is_none() {
        return Err(CliError::Config(format!("cluster kernel needs integer q, got {}", params.q)));
    }
    if k == Kernel::Product && params.q != 1.0 {
        return Err(CliError::Config(format!("product kernel needs q = 1, got {}", params.q)));
    }
    Ok(k)
}

fn mc(cfg: &ExperimentConfig, params: &RCParams) -> Result<McConfig, CliError> {
    let thin = cfg.thin.unwrap_or(1);
    Ok(McConfig {
        samples: cfg.sweeps.unwrap_or(10_000) / thin,
        burn_in: cfg.burnin.unwrap_or(200),
        thin,
        kernel: kernel(cfg, params)?,
        batches: cfg.batches.unwrap_or(32),
        seed: cfg.seed.unwrap_or(1),
        replicas: cfg.replicas.unwrap_or(1),
    })
}

fn geometry<T>(r: Result<T, rclab::lattice::GeometryError>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Config(e.to_string()))
}

fn region(cfg: &ExperimentConfig) -> Result<Region, CliError> {
    let d = cfg.d();
    let r = match cfg.region.as_deref().unwrap_or("box") {
        "block" => geometry(build_block(cfg.ell.unwrap(), cfg.h.unwrap(), d))?,
        "slab" => geometry(build_slab(cfg.slab_l.unwrap(), cfg.n.unwrap(), d))?,
        "rectangle" => geometry(build_rectangle(cfg.n.unwrap(), cfg.delta.unwrap(), cfg.margin.unwrap(), d))?,
        _ => geometry(build_box(cfg.n.unwrap(), d))?,
    };
    Ok(match cfg.scope.as_deref() {
        Some("internal") => r.with_scope(BondScope::Internal),
        Some("touching") | None => r.with_scope(BondScope::Touching),
        Some(s) => return Err(CliError::Config(format!("unknown scope {s}"))),
    })
}

fn bc(region: &Region, cfg: &ExperimentConfig) -> Result<BoundaryCondition, CliError> {
    BoundaryCondition::parse(region, cfg.bc.as_deref().unwrap_or("free")).map_err(|e| CliError::Config(e.to_string()))
}

fn replica_ids(cfg: &ExperimentConfig) -> Vec<u64> {
    let first = cfg.first_replica.unwrap_or(0);
    (first..first + cfg.replicas.unwrap_or(1) as u64).collect()
}

/// Runs one chain per replica id on stream (seed, id, chain); returns the
/// batch series of every observable and each replica's final state.
fn replica_series(
    out: &mut Out,
    cfg: &ExperimentConfig,
    region: &Region,
    params: &RCParams,
    bc: &BoundaryCondition,
    mc: &McConfig,
    chain: u64,
    f: &Observer,
) -> Result<(Vec<Vec<BatchSeries>>, Vec<BondConfig>), CliError> {
    let schedule = Schedule { sweeps: mc.burn_in + mc.samples * mc.thin, burn_in: mc.burn_in, thin: mc.thin, kernel: mc.kernel };
    let ids = replica_ids(cfg);
    for &r in &ids {
        out.stream(r, chain);
    }
    let runs: Vec<Result<(Vec<Vec<f64>>, BondConfig), CliError>> = ids
        .par_iter()
        .map(|&r| {
            let mut cols: Vec<Vec<f64>> = Vec::new();
            let mut last = BondConfig::all_closed(region.n_bonds());
            run_chain(region, params, bc, &schedule, replica_stream(mc.seed, r, chain), |st| {
                let v = f(st);
                if cols.is_empty() {
                    cols = vec![Vec::with_capacity(mc.samples); v.len()];
                }
                for (c, x) in cols.iter_mut().zip(v) {
                    c.push(x);
                }
                last = st.config();
            })
            .map_err(|e| CliError::Estimator(e.to_string()))?;
            Ok((cols, last))
        })
        .collect();
    let mut series: Vec<Vec<BatchSeries>> = Vec::new();
    let mut finals = Vec::new();
    for (&r, run) in ids.iter().zip(runs) {
        let (cols, last) = run?;
        if series.is_empty() {
            series = vec![Vec::new(); cols.len()];
        }
        for (k, c) in cols.iter().enumerate() {
            let (size, means) = batch_means(c, mc.batches);
            series[k].push(BatchSeries { replica: r, batch_size: size, means });
        }
        finals.push(last);
    }
    Ok((series, finals))
}

fn param_text(cfg: &ExperimentConfig) -> String {
    format!("d={},q={},p={},bc={}", cfg.d(), cfg.q_value(), cfg.p_value(), cfg.bc.as_deref().unwrap_or("-"))
}

fn event_partial(
    out: &mut Out,
    cfg: &ExperimentConfig,
    region: &Region,
    specs: &[EventSpec],
    chain: u64,
) -> Result<Partial, CliError> {
    let params = params(cfg)?;
    let bc = bc(region, cfg)?;
    let mc = mc(cfg, &params)?;
    for s in specs {
        s.validate(region).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let f = |st: &mut ChainState| -> Vec<f64> {
        let c = BondConfig::from_bools(st.omega());
        specs.iter().map(|s| f64::from(u8::from(eval_unchecked(region, &c, &bc, s)))).collect()
    };
    let (series, _) = replica_series(out, cfg, region, &params, &bc, &mc, chain, &f)?;
    let method = format!("mc:{:?}", mc.kernel).to_lowercase();
    let entries = specs
        .iter()
        .zip(series)
        .map(|(s, series)| Entry { name: s.id(), params: param_text(cfg), method: method.clone(), series })
        .collect();
    Ok(Partial { config: cfg.clone(), replica_ids: replica_ids(cfg), entries, differences: Vec::new() })
}

fn sample(cfg: &ExperimentConfig, out: &mut Out) -> Result<(), CliError> {
    let region = region(cfg)?;
    let params = params(cfg)?;
    let bc = bc(&region, cfg)?;
    let mc = mc(cfg, &params)?;
    let nb = region.n_bonds().max(1) as f64;
    let f = |st: &mut ChainState| -> Vec<f64> {
        let open = st.omega().iter().filter(|&&w| w).count() as f64;
        vec![open / nb, st.cluster_index().cluster_count() as f64]
    };
    let (series, finals) = replica_series(out, cfg, &region, &params, &bc, &mc, 0, &f)?;
    let method = format!("mc:{:?}", mc.kernel).to_lowercase();
    let names = ["open_bond_density", "cluster_count"];
    let entries = names
        .iter()
        .zip(series)
        .map(|(n, series)| Entry { name: n.to_string(), params: param_text(cfg), method: method.clone(), series })
        .collect();
    let ids = replica_ids(cfg);
    for (r, c) in ids.iter().zip(&finals) {
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &region, &bc, &params, c).map_err(|e| CliError::Io(e.to_string()))?;
        out.write(&format!("snapshot_r{r}.rcs"), &buf)?;
    }
    let p = Partial { config: cfg.clone(), replica_ids: ids, entries, differences: Vec::new() };
    out.partial(&p, cfg.format.unwrap())
}

fn crossing(cfg: &ExperimentConfig, out: &mut Out) -> Result<(), CliError> {
    let d = cfg.d();
    let n = cfg.n.unwrap();
    let region = geometry(build_box(n, d))?;
    let specs = [
        EventSpec::FaceCrossing { lo: vec![-n; d], hi: vec![n; d], axis: cfg.axis.unwrap() },
        EventSpec::BoxPercolation { n },
    ];
    let p = event_partial(out, cfg, &region, &specs, 0)?;
    out.partial(&p, cfg.format.unwrap())
}

fn blocks(cfg: &ExperimentConfig, out: &mut Out) -> Result<(), CliError> {
    let (ell, h) = (cfg.ell.unwrap(), cfg.h.unwrap());
    let region = geometry(build_block(cfg.block_l.unwrap(), cfg.block_h.unwrap(), cfg.d()))?.with_scope(BondScope::Internal);
    let mut specs = Vec::new();
    for &k in cfg.k.as_ref().unwrap() {
        specs.push(EventSpec::TopSeed { k, ell, h, index: None });
        specs.push(EventSpec::LateralSeed { k, ell, h, index: None });
        specs.push(EventSpec::Occupied { k, ell, h });
    }
    let p = event_partial(out, cfg, &region, &specs, 0)?;
    out.partial(&p, cfg.format.unwrap())
}

fn mixing(cfg: &ExperimentConfig, out: &mut Out) -> Result<(), CliError> {
    let (p, q, d, s) = (cfg.p_value(), cfg.q_value(), cfg.d(), cfg.s.unwrap());
    let mut entries = Vec::new();
    let mut differences = Vec::new();
    for (i, &k) in cfg.k.as_ref().unwrap().iter().enumerate() {
        let setup = mixing_setup(k, s, p, q, d)?;
        let mc = mc(cfg, &setup.params)?;
        let b0 = setup.b0;
        let f = move |st: &mut ChainState| vec![st.open_probability(b0)];
        let params = format!("d={d},q={q},p={p},s={s},K={k}");
        for (name, bc, chain) in [("wired", &setup.wired, 2 * i as u64), ("free", &setup.free, 2 * i as u64 + 1)] {
            let (mut series, _) = replica_series(out, cfg, &setup.region, &setup.params, bc, &mc, chain, &f)?;
            entries.push(Entry {
                name: format!("{name}(K={k})"),
                params: params.clone(),
                method: "rao-blackwell".into(),
                series: series.remove(0),
            });
        }
        differences.push(Difference { name: format!("gap(K={k})"), a: format!("wired(K={k})"), b: format!("free(K={k})") });
    }
    let p = Partial { config: cfg.clone(), replica_ids: replica_ids(cfg), entries, differences };
    out.partial(&p, cfg.format.unwrap())
}

fn tension(cfg: &ExperimentConfig, out: &mut Out) -> Result<(), CliError> {
    let params = params(cfg)?;
    let mut mc = mc(cfg, &params)?;
    mc.replicas = cfg.replicas.unwrap();
    for r in replica_ids(cfg) {
        out.stream(r, 0);
    }
    let tc = TensionConfig {
        mc,
        ladder_nodes: cfg.ladder_nodes.unwrap(),
        min_hits: cfg.min_hits.unwrap(),
        allow_ladder: true,
    };
    let bc = cfg.bc.clone().unwrap();
    let r = surface_tension_estimate(cfg.n.unwrap(), cfg.delta.unwrap(), cfg.margin.unwrap(), cfg.d(), &params, &bc, &tc);
    let r = match r {
        Ok(r) => r,
        Err(rclab::observables::EstimateError::Event(e)) => return Err(CliError::Config(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    out.json("tension.json", &r)?;
    let pt = param_text(cfg);
    let mut rows = Vec::new();
    if let Some(t) = &r.tau {
        rows.push(EstimateRow::new(format!("tau(n={},method={})", r.n, r.method), &pt, t));
    } else if r.infinite {
        rows.push(EstimateRow::new(format!("tau(n={},method={})", r.n, r.method), &pt, &Estimate::exact(f64::INFINITY, "exact")));
    }
    if let Some(l) = &r.log_prob {
        rows.push(EstimateRow::new(format!("log_prob_disconnection(n={})", r.n), &pt, l));
    }
    out.rows(&rows, cfg.format.unwrap())?;
    if let Some(f) = &r.failure {
        out.finish(cfg)?;
        return Err(CliError::Estimator(f.clone()));
    }
    Ok(())
}

fn renorm(cfg: &ExperimentConfig, mut out: Out) -> Result<(), CliError> {
    let params = params(cfg)?;
    let d = cfg.d();
    let (bl, bh, eta) = (cfg.block_l.unwrap(), cfg.block_h.unwrap(), cfg.eta.unwrap());
    let mut calibration: Option<Calibration> = None;
    let spec = match (&cfg.k, cfg.ell, cfg.h) {
        (Some(k), Some(ell), Some(h)) => {
            RenormSpec::new(k[0], ell, h, bl, bh, eta, d).map_err(|e| CliError::Config(e.to_string()))?
        }
        _ => {
            let mc = mc(cfg, &params)?;
            for r in replica_ids(cfg) {
                out.stream(r, 0);
            }
            match calibrate_block(&params, cfg.bc.as_deref().unwrap(), bl, bh, eta, d, &mc) {
                Ok(c) => {
                    let s = c.spec.clone();
                    calibration = Some(c);
                    s
                }
                Err(RenormError::Calibration { target, best_lower, best }) => {
                    out.json("calibration.json", &json!({ "target": target, "best_lower": best_lower, "best": best }))?;
                    out.finish(cfg)?;
                    return Err(CliError::Estimator(format!(
                        "no block reaches occupied probability {target} (best lower bound {best_lower})"
                    )));
                }
                Err(RenormError::Invalid(m)) => return Err(CliError::Config(m)),
                Err(e) => return Err(CliError::Estimator(e.to_string())),
            }
        }
    };
    if let Some(c) = &calibration {
        out.json("calibration.json", c)?;
    }
    let seed = cfg.seed.unwrap();
    let site = site_percolation_threshold(64, 400, seed);
    let pt = param_text(cfg);
    let mut rows = vec![EstimateRow::new("site_percolation_threshold(n=64)", "d=2", &site)];
    if params.q != 1.0 {
        out.json(
            "renorm.json",
            &json!({ "spec": spec, "site_threshold": site,
                     "note": "cluster growth reads an exact bond field, available for q = 1 only" }),
        )?;
        out.rows(&rows, cfg.format.unwrap())?;
        return out.finish(cfg);
    }
    let m = cfg.m.unwrap();
    let ids = replica_ids(cfg);
    let runs: Vec<_> = ids
        .par_iter()
        .map(|&r| {
            let field = HashedField { seed: seed ^ stream_id(r, 1).wrapping_mul(0x9E37_79B9_7F4A_7C15), p: params.p, dim: d };
            let g = grow_cluster(&field, &spec, m);
            let verified = verify_renormalized_path(&field, &g);
            (r, g, verified)
        })
        .collect();
    let mut events = Vec::new();
    let mut summary = Vec::new();
    for (r, g, verified) in &runs {
        events.extend(inspection_events(g));
        summary.push(json!({
            "replica": r,
            "examined": g.examined(),
            "good": g.good().count(),
            "root_good": g.get((0, 0)).is_some_and(|s| s.is_good()),
            "verified": verified,
        }));
    }
    if let Some((r, g, _)) = runs.first() {
        out.write(&format!("growth_r{r}.json"), growth_json(g).as_bytes())?;
        out.write(&format!("growth_r{r}.svg"), growth_svg(g).as_bytes())?;
    }
    let alpha = estimate_alpha(&events, Some(&spec));
    let verified = runs.iter().filter(|x| x.2).count() as f64 / runs.len() as f64;
    if let Some(a) = &alpha.alpha {
        rows.push(EstimateRow::new("alpha", &pt, a));
    }
    rows.push(EstimateRow::new("verified_fraction", &pt, &Estimate::exact(verified, "count")));
    out.json("renorm.json", &json!({ "spec": spec, "runs": summary, "alpha": alpha, "site_threshold": site }))?;
    out.rows(&rows, cfg.format.unwrap())?;
    out.finish(cfg)
}

fn threshold(cfg: &ExperimentConfig, out: &mut Out) -> Result<(), CliError> {
    let q = cfg.q_value();
    let d = cfg.d();
    // the kernel is chosen per cell from q
    let pr = RCParams::new(q, 0.5).map_err(|e| CliError::Config(e.to_string()))?;
    let mc = mc(cfg, &pr)?;
    for r in 0..mc.replicas as u64 {
        out.stream(r, 0);
    }
    let bis = BisectionConfig { theta: cfg.theta.unwrap(), depth: cfg.depth.unwrap(), lo: 0.0, hi: 1.0 };
    let ns = cfg.ns.clone().unwrap();
    let report = match cfg.criterion.as_deref() {
        Some("box") => estimate_box_threshold(q, d, &ns, &bis, &mc),
        _ => estimate_slab_threshold(cfg.slab_l.unwrap(), q, d, &ns, &bis, &mc),
    }
    .map_err(|e| match e {
        rclab::observables::EstimateError::Failure(m) => CliError::Config(m),
        e => e.into(),
    })?;
    out.json("threshold.json", &report)?;
    let mut buf = Vec::new();
    rclab::observables::write_csv(&report.rows(), &mut buf)?;
    out.write("curves.csv", &buf)
}

fn oracle(cfg: &ExperimentConfig, out: &mut Out) -> Result<(), CliError> {
    let region = region(cfg)?;
    let params = params(cfg)?;
    let bc = bc(&region, cfg)?;
    let table = enumerate_exact(&region, &params, &bc).map_err(|e| match e {
        ExactError::TooManyBonds { .. } => CliError::OracleCap(e.to_string()),
        e => CliError::Estimator(e.to_string()),
    })?;
    let nb = table.n_bonds();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["mask", "config", "probability"])?;
    for (mask, pr) in table.probs().iter().enumerate() {
        let bits: String = (0..nb).map(|e| if mask >> e & 1 == 1 { '1' } else { '0' }).collect();
        w.write_record([mask.to_string(), bits, format!("{pr:e}")])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    out.write("exact.csv", &bytes)?;
    let bonds: Vec<_> = (0..nb)
        .map(|e| {
            let b = region.bond(e);
            json!({ "index": e, "from": region.coords(b.a), "axis": b.axis, "marginal": table.marginal(e) })
        })
        .collect();
    out.json("oracle.json", &json!({ "n_bonds": nb, "bc": bc.describe(), "bonds": bonds }))
}

fn merge(cfg: &ExperimentConfig, mut out: Out, files: &[PathBuf]) -> Result<(), CliError> {
    let mut parts = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(f).map_err(|e| CliError::Config(format!("{}: {e}", f.display())))?;
        let p: Partial = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", f.display())))?;
        parts.push(p);
    }
    let merged = Partial::merge(&parts)?;
    for p in &parts {
        out.input(format!("replicas {:?}", p.replica_ids));
    }
    out.partial(&merged, cfg.format.or(merged.config.format).unwrap())?;
    out.finish(&merged.config)
}
