//! One function per subcommand. Replicas run through the core's data-parallel
//! map, results come back in replica order, and only this thread writes files.

use std::collections::BTreeMap;

use anyhow::Result;
use pspin_core::ensemble::{endpoint_embed, ou_chain, sample_bridge_chain, verify_chain_covariance, MIN_REPLICAS};
use pspin_core::following::{
    point_events, run_lip, run_loclip, run_loclip_verified, success_stability_study, AuxRandomness, BddSettings, EventParams,
    LocLipRun, PolishedAscent, StepRecord, TrackingParams,
};
use pspin_core::linalg::{dist, norm, sym_eigenvalues_desc};
use pspin_core::optimizers::{
    estimate_stability, gd_ascent, hessian_ascent, measure_overlap, Algorithm, AscentConfig, ConstantAlgorithm, GdAlgorithm,
    HessianAscentAlgorithm, HessianAscentConfig, OmegaCoupling, RoundedLinear, StopReason, Trajectory,
};
use pspin_core::par::{map_indexed, Execution};
use pspin_core::presets::{bdd_constant, calibrate_constant, BDD_CONSTANT_PLANTED};
use pspin_core::sphere::LocalGeometry;
use pspin_core::wells::plant_well;
use pspin_core::{alg_threshold, bulk_edge, seeds, Hamiltonian, SpherePoint};
use serde_json::{json, Value};

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{Check, RunWriter};

pub struct Outcome {
    pub summary: Value,
    pub checks: Vec<Check>,
}

const EXEC: Execution = Execution::Parallel;

fn fmt_row(values: &[String]) -> String {
    values.join(",")
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 0 {
        0.5 * (xs[m - 1] + xs[m])
    } else {
        xs[m]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SpectrumAt {
    Random,
    Gd,
}

pub fn spectrum(cfg: &ExperimentConfig, w: &mut RunWriter, at: SpectrumAt, bins: usize) -> Result<Outcome> {
    let c = &cfg.params;
    let (n, p) = (c.n, c.p);
    let edge = bulk_edge(p);
    let per = map_indexed(EXEC, c.replicas, |r| -> Result<(Vec<f64>, f64)> {
        let h = Hamiltonian::sample(n, p, seeds::derive(c.seed, "spectrum-h", r as u64))?;
        let mut sigma = SpherePoint::random(n, &mut seeds::rng(seeds::derive(c.seed, "spectrum-sigma", r as u64)));
        if at == SpectrumAt::Gd {
            let t = gd_ascent(&h, &sigma, &AscentConfig::new(c.eta, c.max_iters, c.delta, r as u64)?)?;
            sigma = t.final_point().clone();
        }
        let geom = LocalGeometry::at(&h, &sigma);
        Ok((sym_eigenvalues_desc(&geom.riemannian_hessian), geom.radial))
    });
    let per = per.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut replicas = Vec::new();
    let mut checks = Vec::new();
    let mut pooled = Vec::new();
    for (r, (eig, radial)) in per.iter().enumerate() {
        for (i, e) in eig.iter().enumerate() {
            rows.push(fmt_row(&[r.to_string(), i.to_string(), e.to_string(), (e + radial).to_string()]));
        }
        pooled.extend_from_slice(eig);
        let m = eig.iter().sum::<f64>() / eig.len() as f64;
        let sd = (eig.iter().map(|e| (e - m).powi(2)).sum::<f64>() / eig.len() as f64).sqrt();
        let predicted = edge - radial;
        let bulk = m + 2.0 * sd;
        let max_abs_unshifted = eig.iter().map(|e| (e + radial).abs()).fold(0.0f64, f64::max);
        replicas.push(json!({
            "replica": r, "radial": radial, "predicted_bulk_edge": predicted,
            "top_eigenvalue": eig[0], "bulk_edge_estimate": bulk, "max_abs_unshifted": max_abs_unshifted,
        }));
        match at {
            SpectrumAt::Random => {
                checks.push(Check::new(
                    &format!("replica {r} unshifted support"),
                    max_abs_unshifted <= edge + 0.5 && (eig[0] + radial - edge).abs() <= 0.08 * edge,
                    format!("max |eig + radial| {max_abs_unshifted:.4}, top {:.4}", eig[0] + radial),
                ));
            }
            SpectrumAt::Gd => {
                checks.push(Check::new(
                    &format!("replica {r} shifted bulk edge"),
                    (bulk - predicted).abs() <= 0.4,
                    format!("bulk edge {bulk:.4} vs 2√(p(p-1)) - radial = {predicted:.4}"),
                ));
            }
        }
    }
    w.csv("eigenvalues.csv", "replica,index,eigenvalue,unshifted", &rows)?;
    let lo = pooled.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = pooled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(1e-12);
    let mut counts = vec![0usize; bins];
    for e in &pooled {
        counts[(((e - lo) / width) as usize).min(bins - 1)] += 1;
    }
    let hist: Vec<Vec<f64>> = counts
        .iter()
        .enumerate()
        .map(|(b, &k)| vec![lo + (b as f64 + 0.5) * width, k as f64, k as f64 / (pooled.len() as f64 * width)])
        .collect();
    let hist_rows: Vec<String> = hist.iter().map(|r| fmt_row(&[r[0].to_string(), r[1].to_string(), r[2].to_string()])).collect();
    w.csv("histogram.csv", "center,count,density", &hist_rows)?;
    w.dat("histogram.dat", &["center", "count", "density"], &hist)?;
    let summary = json!({
        "at": format!("{at:?}").to_lowercase(),
        "bulk_edge_constant": edge,
        "replicas": replicas,
    });
    w.json("spectrum.json", &summary)?;
    Ok(Outcome { summary, checks })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Optimizer {
    Gd,
    Hessian,
}

/// Fixed well parameters for the well-rate line.
const WELL_RATE_GAMMA: f64 = 0.02;
const WELL_RATE_DELTA: f64 = 0.05;

pub fn optimize(cfg: &ExperimentConfig, w: &mut RunWriter, optimizer: Optimizer) -> Result<Outcome> {
    let c = &cfg.params;
    let (n, p) = (c.n, c.p);
    let sq = (n as f64).sqrt();
    let runs = map_indexed(EXEC, c.replicas, |r| -> Result<Trajectory> {
        let h = Hamiltonian::sample(n, p, seeds::derive(c.seed, "optimize-h", r as u64))?;
        let start = SpherePoint::random(n, &mut seeds::rng(seeds::derive(c.seed, "optimize-start", r as u64)));
        Ok(match optimizer {
            Optimizer::Gd => gd_ascent(&h, &start, &AscentConfig::new(c.eta, c.max_iters, c.delta, r as u64)?)?,
            Optimizer::Hessian => {
                let hc = HessianAscentConfig { seed: r as u64, start: Some(start.into_coords()), ..HessianAscentConfig::default() };
                hessian_ascent(&h, &hc)?
            }
        })
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let edge = bulk_edge(p);
    let mut rows = Vec::new();
    let mut wells = 0;
    let mut stop_ok = true;
    for (r, t) in runs.iter().enumerate() {
        let csv = t.to_csv(n);
        let mut lines = csv.lines();
        let header = lines.next().unwrap_or_default().to_string();
        let body: Vec<String> = lines.map(str::to_string).collect();
        w.csv(&format!("trajectories/replica_{r:03}.csv"), &header, &body)?;
        let has_well = t.grad_norms.iter().zip(&t.radials).any(|(g, rad)| *g < WELL_RATE_DELTA * sq && rad - edge > WELL_RATE_GAMMA);
        wells += has_well as usize;
        if t.stop_reason == StopReason::GradientThreshold && optimizer == Optimizer::Gd {
            stop_ok &= t.grad_norms.last().is_some_and(|g| *g <= c.delta * sq);
        }
        rows.push(fmt_row(&[
            r.to_string(),
            t.final_energy().to_string(),
            t.energies.len().to_string(),
            format!("{:?}", t.stop_reason),
            has_well.to_string(),
            t.gain_violations.to_string(),
        ]));
    }
    w.csv("energies.csv", "replica,final_energy_per_N,iterates,stop_reason,contains_well,gain_violations", &rows)?;
    let energies: Vec<f64> = runs.iter().map(|t| t.final_energy()).collect();
    let med = median(energies.clone());
    let summary = json!({
        "algorithm": format!("{optimizer:?}").to_lowercase(),
        "alg_threshold": { "p3": alg_threshold(3), "p4": alg_threshold(4), "this_p": alg_threshold(p) },
        "median_final_energy": med,
        "final_energies": energies,
        "well_rate": { "gamma": WELL_RATE_GAMMA, "delta": WELL_RATE_DELTA, "rate": wells as f64 / runs.len() as f64 },
    });
    w.json("optimize.json", &summary)?;
    let checks = vec![Check::new("stop implies small gradient", stop_ok, format!("delta = {}", c.delta))];
    Ok(Outcome { summary, checks })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum FollowMode {
    Planted,
    Spinglass,
    Verification,
}

fn reason_kind(run: &LocLipRun) -> String {
    match &run.outcome {
        Ok(_) => "defined".into(),
        Err(u) => {
            let s = format!("{:?}", u.reason);
            s.split(['(', ' ', '{']).next().unwrap_or("unknown").to_string()
        }
    }
}

struct FollowResult {
    run: LocLipRun,
    lip_norm: f64,
    a_star: f64,
    tau_all: f64,
    solve0: bool,
    final_gap: Option<f64>,
}

pub fn follow(cfg: &ExperimentConfig, w: &mut RunWriter, mode: FollowMode, bdd: bool) -> Result<Outcome> {
    let c = &cfg.params;
    let (n, p) = (c.n, c.p);
    let sq = (n as f64).sqrt();
    let mut params = TrackingParams::new(c.gamma, c.delta, c.d, c.iota, c.epsilon, c.k_steps)?;
    params.newton.tol = c.tol;
    if bdd {
        let constant = if mode == FollowMode::Spinglass { bdd_constant(p) } else { BDD_CONSTANT_PLANTED };
        params = params.with_bdd(BddSettings::new(constant));
    }
    let results = map_indexed(EXEC, c.replicas, |r| -> Result<FollowResult> {
        let s = seeds::derive(c.seed, "follow", r as u64);
        let (h0, h, base): (Hamiltonian, Hamiltonian, PolishedAscent) = match mode {
            FollowMode::Spinglass => (
                Hamiltonian::sample(n, p, seeds::derive(s, "h0", 0))?,
                Hamiltonian::sample(n, p, seeds::derive(s, "h", 0))?,
                PolishedAscent::new(c.eta, c.max_iters, 1e-3),
            ),
            FollowMode::Planted | FollowMode::Verification => {
                let wv = SpherePoint::random(n, &mut seeds::rng(seeds::derive(s, "w", 0)));
                (
                    plant_well(&Hamiltonian::sample(n, p, seeds::derive(s, "h0", 0))?, &wv, c.mu)?,
                    plant_well(&Hamiltonian::sample(n, p, seeds::derive(s, "h", 0))?, &wv, c.mu)?,
                    PolishedAscent::new(c.eta, c.max_iters, 1e-3).from_start(wv.coords().to_vec()),
                )
            }
        };
        let omega = AuxRandomness::with_start(h0, &params, &base, s)?;
        let solve0 = point_events(&omega.h0, &omega.sigma0, &params.events()).solve;
        let (run, final_gap) = match mode {
            FollowMode::Verification => {
                let alg_seed = seeds::derive(s, "verify-alg", 0);
                let run = run_loclip_verified(&h, &omega, &params, &base, alg_seed);
                let gap = match &run.outcome {
                    Ok(end) => {
                        let hk = endpoint_embed(&omega.h0, &h, params.k_steps, params.epsilon)?;
                        Some(dist(end.coords(), &base.run(&hk, alg_seed)) / sq)
                    }
                    Err(_) => None,
                };
                (run, gap)
            }
            _ => (run_loclip(&h, &omega, &params), None),
        };
        let lip = run_lip(&h, &omega, &params);
        Ok(FollowResult { lip_norm: norm(&lip.point), a_star: lip.a_star, tau_all: lip.tau_all, run, solve0, final_gap })
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    let mut ledgers = Vec::new();
    for (r, fr) in results.iter().enumerate() {
        let steps: Vec<String> = fr.run.steps.iter().map(StepRecord::csv_row).collect();
        w.csv(&format!("steps/replica_{r:03}.csv"), StepRecord::CSV_HEADER, &steps)?;
        let kind = reason_kind(&fr.run);
        *reasons.entry(kind.clone()).or_default() += 1;
        let undefined_step = fr.run.outcome.as_ref().err().map(|u| u.step.to_string()).unwrap_or_default();
        let energy = fr.run.steps.last().map(|s| s.energy).unwrap_or(f64::NAN);
        rows.push(fmt_row(&[
            r.to_string(),
            fr.run.is_defined().to_string(),
            undefined_step,
            kind,
            fr.solve0.to_string(),
            energy.to_string(),
            fr.a_star.to_string(),
            fr.tau_all.to_string(),
            fr.final_gap.map(|g| g.to_string()).unwrap_or_default(),
        ]));
        ledgers.push(json!({ "replica": r, "ledger": fr.run.ledger, "undefined": fr.run.outcome.as_ref().err() }));
    }
    w.csv("runs.csv", "replica,defined,undefined_step,outcome,s_solve0,final_energy,a_star,tau_all,final_gap_to_base", &rows)?;
    w.json("ledgers.json", &ledgers)?;
    let total = results.len() as f64;
    let defined = results.iter().filter(|f| f.run.is_defined()).count();
    let solve0 = results.iter().filter(|f| f.solve0).count();
    let defined_given_solve0 = results.iter().filter(|f| f.solve0 && f.run.is_defined()).count();
    let zero_rate = results.iter().filter(|f| f.a_star == 0.0).count() as f64 / total;
    let in_ball = results.iter().all(|f| f.lip_norm <= sq * (1.0 + 1e-12) && f.lip_norm.is_finite());
    let summary = json!({
        "mode": format!("{mode:?}").to_lowercase(),
        "bdd_checked": bdd,
        "success_rate": defined as f64 / total,
        "outcomes": reasons,
        "s_solve0_rate": solve0 as f64 / total,
        "success_rate_given_s_solve0": if solve0 > 0 { json!(defined_given_solve0 as f64 / solve0 as f64) } else { Value::Null },
        "a_star_zero_rate": zero_rate,
    });
    w.json("follow.json", &summary)?;
    let mut checks = vec![Check::new("run_lip output in the ball", in_ball, "all replicas")];
    if mode == FollowMode::Planted {
        checks.push(Check::new("planted success rate", defined as f64 >= 0.9 * total, format!("{defined}/{} defined", results.len())));
    }
    Ok(Outcome { summary, checks })
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, ConfigError> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| ConfigError(format!("bad number {t:?}: {e}")))).collect()
}

pub fn stability(
    cfg: &ExperimentConfig,
    w: &mut RunWriter,
    algorithms: &[String],
    eps_grid: &[f64],
    q_grid: &[f64],
    coupling: OmegaCoupling,
) -> Result<Outcome> {
    let c = &cfg.params;
    let (n, p) = (c.n, c.p);
    let mut rows = Vec::new();
    let mut overlap_rows = Vec::new();
    let mut checks = Vec::new();
    let mut table = Vec::new();
    for name in algorithms {
        let alg: Box<dyn Algorithm> = match name.as_str() {
            "constant" => Box::new(ConstantAlgorithm { point: vec![0.5; n] }),
            "rounded-linear" => Box::new(RoundedLinear),
            "gd" => Box::new(GdAlgorithm { eta: c.eta, max_iters: c.max_iters, delta: c.delta }),
            "hessian" => Box::new(HessianAscentAlgorithm { cfg: HessianAscentConfig::default() }),
            other => return Err(ConfigError(format!("unknown algorithm {other:?}")).into()),
        };
        let mut s_values = Vec::new();
        for &eps in eps_grid {
            let est = estimate_stability(alg.as_ref(), eps, c.replicas, n, p, c.seed, coupling, EXEC)?;
            rows.push(fmt_row(&[name.clone(), eps.to_string(), est.s_hat.to_string(), est.stderr.to_string()]));
            if name == "rounded-linear" {
                let z = (est.s_hat - (2.0 - eps)).abs() / est.stderr;
                checks.push(Check::new(&format!("rounded-linear closed form at eps {eps}"), z <= 4.0, format!("z = {z:.2}")));
            }
            s_values.push(est.s_hat);
        }
        if name == "constant" {
            checks.push(Check::new("constant algorithm is perfectly stable", s_values.iter().all(|&s| s == 0.0), format!("{s_values:?}")));
        }
        if name == "gd" && s_values.len() > 1 {
            let spread = s_values.iter().cloned().fold(0.0f64, f64::max) / s_values.iter().cloned().fold(f64::INFINITY, f64::min);
            checks.push(Check::new("gd stability within a factor 3 across eps", spread < 3.0, format!("spread {spread:.2}")));
        }
        if !q_grid.is_empty() {
            for row in measure_overlap(alg.as_ref(), q_grid, c.replicas, n, p, c.seed, EXEC)? {
                overlap_rows.push(fmt_row(&[name.clone(), row.q.to_string(), row.mean.to_string(), row.variance.to_string()]));
            }
        }
        table.push(json!({ "algorithm": name, "params": alg.params(), "epsilon": eps_grid, "s_hat": s_values }));
    }
    w.csv("stability.csv", "algorithm,epsilon,s_hat,stderr", &rows)?;
    if !overlap_rows.is_empty() {
        w.csv("overlap.csv", "algorithm,q,mean,variance", &overlap_rows)?;
    }
    let summary = json!({ "coupling": coupling, "algorithms": table });
    w.json("stability.json", &summary)?;
    Ok(Outcome { summary, checks })
}

pub fn events(cfg: &ExperimentConfig, w: &mut RunWriter, s_hat: Option<f64>, stab_factor: f64, bdd: bool) -> Result<Outcome> {
    let c = &cfg.params;
    let alg = GdAlgorithm { eta: c.eta, max_iters: c.max_iters, delta: c.delta };
    let events = EventParams { gamma: c.gamma, delta: c.delta * stab_factor, d: c.d, iota: c.iota, epsilon: c.epsilon };
    let mut settings = BddSettings::new(bdd_constant(c.p));
    settings.random_probes = 5;
    let report = success_stability_study(&alg, c.n, c.p, &events, c.k_steps, c.replicas, bdd.then_some(&settings), s_hat, c.seed, EXEC)?;
    let rows: Vec<String> = report
        .per_chain
        .iter()
        .enumerate()
        .map(|(i, ch)| {
            fmt_row(&[
                i.to_string(),
                ch.solve.iter().filter(|&&b| b).count().to_string(),
                ch.stable.iter().filter(|&&b| b).count().to_string(),
                ch.bounded.map(|b| b.to_string()).unwrap_or_default(),
                ch.all.to_string(),
            ])
        })
        .collect();
    w.csv("chains.csv", "chain,solve_count,stable_count,bounded,all", &rows)?;
    let summary = json!({
        "p_solve": report.p_solve,
        "p_unstable": report.p_unstable,
        "p_all": report.p_all,
        "sigma_mc": report.sigma_mc,
        "bound": report.bound,
        "plugin_bound": report.plugin_bound,
        "stab_delta": events.delta,
    });
    w.json("events.json", &summary)?;
    let checks = vec![Check::new(
        "success-and-stability bound",
        report.bound_holds(),
        format!("P[S_all] {:.4} vs bound {:.4e} - 2σ {:.4}", report.p_all, report.bound, 2.0 * report.sigma_mc),
    )];
    Ok(Outcome { summary, checks })
}

pub fn chain_verify(cfg: &ExperimentConfig, w: &mut RunWriter, forward: bool) -> Result<Outcome> {
    let c = &cfg.params;
    if c.replicas < MIN_REPLICAS {
        return Err(ConfigError(format!("chain-verify needs at least {MIN_REPLICAS} replicas, got {}", c.replicas)).into());
    }
    let chains = map_indexed(EXEC, c.replicas, |r| {
        let s = seeds::derive(c.seed, "chain", r as u64);
        if forward {
            ou_chain(c.n, c.p, c.k_steps, c.epsilon, s)
        } else {
            sample_bridge_chain(c.n, c.p, c.k_steps, c.epsilon, s)
        }
    });
    let chains = chains.into_iter().collect::<pspin_core::Result<Vec<_>>>()?;
    let check = verify_chain_covariance(&chains, EXEC)?;
    let rho = 1.0 - c.epsilon;
    let mut rows = Vec::new();
    for (i, row) in check.empirical.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            rows.push(fmt_row(&[i.to_string(), j.to_string(), v.to_string(), rho.powi((i as i32 - j as i32).abs()).to_string()]));
        }
    }
    w.csv("covariance.csv", "i,j,empirical,target", &rows)?;
    let summary = json!({
        "mode": if forward { "forward" } else { "bridge" },
        "max_abs_deviation": check.max_abs_deviation,
        "max_z": check.max_z,
        "pass": check.pass,
    });
    w.json("chain.json", &summary)?;
    let checks = vec![Check::new("covariance within 4σ", check.pass, format!("max z {:.3}", check.max_z))];
    Ok(Outcome { summary, checks })
}

pub fn calibrate(cfg: &ExperimentConfig, w: &mut RunWriter, safety: f64) -> Result<Outcome> {
    let c = &cfg.params;
    let cal = calibrate_constant(c.n, c.p, c.replicas, safety, c.seed, EXEC)?;
    w.json("calibration.json", &cal)?;
    Ok(Outcome { summary: serde_json::to_value(&cal)?, checks: Vec::new() })
}
