use std::collections::HashMap;

use ebinfer::distributions::GaussianParams;
use ebinfer::effect_size::{fit_marginal_density, report_from_fit};
use ebinfer::empirical_null::{fit_empirical_null, CentralFitConfig, EmpiricalNullFit};
use ebinfer::fdr::{bh_threshold, AltDensity, FdrReport, MixtureComponent, NullModel, Side, TwoGroupsModel};
use ebinfer::io;
use ebinfer::relevance::{running_median_detrend, stratified_fdr, Stratification, StratumNull};
use ebinfer::shrinkage::james_stein;
use ebinfer::simlab::{
    certify_dominance, certify_fdr_control, certify_tweedie, DominanceScenario, Estimator, FdrScenario, MuSpec,
    Prior, SimConfig, TweedieScenario, BATTING_SAMPLING_VAR, BATTING_TRUTH,
};
use ebinfer::zpipeline::{t_to_z, two_sample_t};
use ebinfer::ZVector;
use serde_json::{json, Value};

use crate::args::*;
use crate::error::CliError;
use crate::output::{warn, OutDir};

pub fn run(cmd: &Command, out: &mut OutDir) -> Result<Value, CliError> {
    match cmd {
        Command::Zvals(a) => zvals(a, out),
        Command::Js(a) => js(a, out),
        Command::Fdr(a) => fdr(a, out),
        Command::Null(a) => null(a, out),
        Command::Effects(a) => effects(a, out),
        Command::Strata(a) => strata(a, out),
        Command::Simulate(a) => simulate(a, out),
    }
}

fn side(s: SideArg) -> Side {
    match s {
        SideArg::Right => Side::Right,
        SideArg::Left => Side::Left,
    }
}

fn fit_config(a: &NullFitArgs) -> CentralFitConfig {
    if a.no_recenter {
        CentralFitConfig::quantiles(a.lower_q, a.upper_q)
    } else {
        CentralFitConfig {
            lower_q: a.lower_q,
            upper_q: a.upper_q,
            ..CentralFitConfig::default()
        }
    }
}

fn theoretical_p0(p0: Option<f64>) -> f64 {
    p0.unwrap_or_else(|| {
        warn("p0 not given; using p0 = 1, which overstates Fdr when non-null cases are present");
        1.0
    })
}

fn resolve_null(z: &ZVector, o: &FdrOptions) -> Result<(NullModel, Option<EmpiricalNullFit>), CliError> {
    match o.null {
        NullArg::Theoretical => Ok((NullModel::theoretical(theoretical_p0(o.p0))?, None)),
        NullArg::Empirical => {
            let fit = fit_empirical_null(z, &fit_config(&o.fit))?;
            let p0 = o.p0.unwrap_or(fit.p0);
            Ok((NullModel::empirical(fit.params(), p0)?, Some(fit)))
        }
    }
}

fn report_summary(r: &FdrReport) -> Value {
    json!({
        "threshold": r.threshold,
        "n_discoveries": r.n_discoveries(),
        "fdr_at_threshold": r.fdr_at_threshold,
        "fdr_at_threshold_clipped": r.fdr_at_threshold_clipped,
        "q": r.q,
        "n": r.n,
        "side": r.side,
        "null": r.null,
    })
}

fn write_fdr_tables(out: &mut OutDir, prefix: &str, z: &ZVector, r: &FdrReport) -> Result<(), CliError> {
    out.table(
        &format!("{prefix}discoveries.tsv"),
        &["index", "label", "z"],
        r.discoveries
            .iter()
            .map(|&i| vec![i.into(), z.label(i).into(), z.values()[i].into()]),
    )?;
    out.table(
        &format!("{prefix}curve.tsv"),
        &["c", "n_exceed", "e0", "fdr_raw", "fdr_clipped"],
        r.curve.iter().map(|p| {
            vec![p.c.into(), p.n_exceed.into(), p.e0.into(), p.fdr_raw.into(), p.fdr_clipped.into()]
        }),
    )
}

fn zvals(a: &ZvalsArgs, out: &mut OutDir) -> Result<Value, CliError> {
    let m = io::read_matrix_files(&a.matrix, &a.groups)?;
    let t = two_sample_t(&m)?;
    let conv = t_to_z(&t.t, t.df)?;
    let z = conv.z.with_labels(m.row_labels().to_vec())?;
    if !conv.saturated.is_empty() {
        warn(format!(
            "{} z-values clamped at |z| = {}",
            conv.saturated.len(),
            ebinfer::zpipeline::Z_SATURATION
        ));
    }

    let mut buf = Vec::new();
    io::write_zvector(&mut buf, &z)?;
    out.write("zvalues.tsv", &buf)?;
    let mut saturated = vec![false; z.len()];
    for &i in &conv.saturated {
        saturated[i] = true;
    }
    out.table(
        "tstats.tsv",
        &["label", "t", "z", "saturated"],
        (0..z.len()).map(|i| vec![z.label(i).into(), t.t[i].into(), z.values()[i].into(), saturated[i].into()]),
    )?;
    Ok(json!({
        "n_rows": m.n_rows(),
        "n_subjects": m.n_cols(),
        "df": t.df,
        "saturated": conv.saturated.iter().map(|&i| z.label(i)).collect::<Vec<_>>(),
    }))
}

fn js(a: &JsArgs, out: &mut OutDir) -> Result<Value, CliError> {
    let x = io::read_values_file(&a.input)?;
    let r = james_stein(&x, a.sigma0_sq)?;
    if r.degenerate {
        warn("all observations are identical; estimates equal the grand mean");
    }
    if r.b_hat == 0.0 && !r.degenerate {
        warn("shrinkage factor clipped at 0; every estimate equals the grand mean");
    }
    out.table(
        "estimates.tsv",
        &["index", "x", "estimate"],
        x.iter()
            .zip(&r.estimates)
            .enumerate()
            .map(|(i, (xi, ei))| vec![i.into(), (*xi).into(), (*ei).into()]),
    )?;
    Ok(json!({
        "n": x.len(),
        "grand_mean": r.m_hat,
        "b_hat": r.b_hat,
        "method": r.method,
        "degenerate": r.degenerate,
    }))
}

fn fdr(a: &FdrArgs, out: &mut OutDir) -> Result<Value, CliError> {
    let z = io::read_zvector_file(&a.input)?;
    let (null, fit) = resolve_null(&z, &a.fdr)?;
    let r = bh_threshold(&z, a.fdr.q, &null, side(a.fdr.side))?;
    write_fdr_tables(out, "", &z, &r)?;
    if let Some(f) = &fit {
        out.json("null_fit.json", f)?;
    }
    let mut v = report_summary(&r);
    v["null_fit"] = json!(fit);
    Ok(v)
}

fn null(a: &NullArgs, out: &mut OutDir) -> Result<Value, CliError> {
    let z = io::read_zvector_file(&a.input)?;
    let fit = fit_empirical_null(&z, &fit_config(&a.fit))?;
    out.json("null_fit.json", &fit)?;
    out.table(
        "trace.tsv",
        &["step", "mean_log_likelihood"],
        fit.trace.iter().enumerate().map(|(i, v)| vec![i.into(), (*v).into()]),
    )?;
    Ok(serde_json::to_value(&fit)?)
}

fn effects(a: &EffectsArgs, out: &mut OutDir) -> Result<Value, CliError> {
    let z = io::read_zvector_file(&a.input)?;
    let fit = fit_marginal_density(&z, a.df, a.bins)?;
    let r = report_from_fit(&z, &fit, a.top_k);
    let n_extrap = r.cases.iter().filter(|c| c.extrapolated).count();
    if n_extrap > 0 {
        warn(format!("{n_extrap} cases lie outside the fitted histogram range"));
    }
    if !r.shrinkage_violations.is_empty() {
        warn(format!(
            "{} top cases were not pulled toward zero",
            r.shrinkage_violations.len()
        ));
    }

    out.table(
        "effects.tsv",
        &["index", "label", "z", "mu_hat", "extrapolated"],
        r.cases.iter().map(|c| {
            vec![c.index.into(), c.label.clone().into(), c.z.into(), c.mu_hat.into(), c.extrapolated.into()]
        }),
    )?;
    out.table(
        "top.tsv",
        &["rank", "index", "label", "z", "mu_hat"],
        r.top().enumerate().map(|(k, c)| {
            vec![(k + 1).into(), c.index.into(), c.label.clone().into(), c.z.into(), c.mu_hat.into()]
        }),
    )?;
    out.table(
        "density.tsv",
        &["midpoint", "count", "fitted_count", "density"],
        fit.midpoints().iter().zip(&fit.counts).map(|(&m, &c)| {
            vec![m.into(), c.into(), fit.log_intensity(m).exp().into(), fit.density(m).into()]
        }),
    )?;
    Ok(json!({
        "n": z.len(),
        "df": r.df,
        "bins": r.bins,
        "fit_deviance": r.fit_deviance,
        "iterations": r.iterations,
        "density_integral": fit.integral(),
        "top": r.top().collect::<Vec<_>>(),
        "shrinkage_violations": r.shrinkage_violations,
        "extrapolated": n_extrap,
    }))
}

fn strata(a: &StrataArgs, out: &mut OutDir) -> Result<Value, CliError> {
    let z = io::read_zvector_file(&a.input)?;
    let strat = match (a.split_at, &a.labels) {
        (Some(t), _) => {
            let cov = z
                .covariate()
                .ok_or_else(|| CliError::Usage("--split-at needs a covariate column in the input".into()))?;
            Stratification::split_at(cov, t)?
        }
        (None, Some(path)) => {
            let pairs: HashMap<String, String> = io::read_pairs_file(path)?.into_iter().collect();
            let names = (0..z.len())
                .map(|i| {
                    let l = z.label(i);
                    pairs
                        .get(&l)
                        .cloned()
                        .ok_or_else(|| CliError::Usage(format!("case '{l}' has no stratum label")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Stratification::from_labels(&names)?
        }
        (None, None) => return Err(CliError::Usage("give --split-at or --labels".into())),
    };

    let s = side(a.fdr.side);
    let null = match a.fdr.null {
        NullArg::Theoretical => StratumNull::Shared(NullModel::theoretical(theoretical_p0(a.fdr.p0))?),
        NullArg::Empirical => {
            if a.fdr.p0.is_some() {
                warn("--p0 is ignored with per-stratum empirical nulls; each stratum uses its fitted p0");
            }
            StratumNull::PerStratumEmpirical(fit_config(&a.fdr.fit))
        }
    };
    let report = stratified_fdr(&z, &strat, a.fdr.q, null, s)?;
    out.json("strata.json", &report)?;
    out.table(
        "strata.tsv",
        &["stratum", "n", "threshold", "discoveries"],
        report
            .strata
            .iter()
            .map(|r| (r.name.as_str(), r.n, &r.report))
            .chain(std::iter::once(("pooled", report.pooled.n, &report.pooled)))
            .map(|(name, n, r)| vec![name.into(), n.into(), r.threshold.into(), r.n_discoveries().into()]),
    )?;

    let mut v = json!({
        "rule": report.rule,
        "strata": report.strata.iter().map(|r| json!({
            "name": r.name,
            "n": r.n,
            "report": report_summary(&r.report),
        })).collect::<Vec<_>>(),
        "pooled": report_summary(&report.pooled),
    });

    if let Some(w) = a.window {
        let d = running_median_detrend(&z, w)?;
        let pooled_null = match null {
            StratumNull::Shared(m) => m,
            StratumNull::PerStratumEmpirical(cfg) => fit_empirical_null(&d.adjusted, &cfg)?.null_model()?,
        };
        let r = bh_threshold(&d.adjusted, a.fdr.q, &pooled_null, s)?;
        let cov = z.covariate().unwrap();
        out.table(
            "detrend.tsv",
            &["label", "covariate", "z", "trend", "adjusted"],
            (0..z.len()).map(|i| {
                vec![
                    z.label(i).into(),
                    cov[i].into(),
                    z.values()[i].into(),
                    d.trend[i].into(),
                    d.adjusted.values()[i].into(),
                ]
            }),
        )?;
        write_fdr_tables(out, "detrended_", &d.adjusted, &r)?;
        v["detrended"] = json!({ "window": w, "report": report_summary(&r) });
    }
    Ok(v)
}

fn simulate(a: &SimulateArgs, out: &mut OutDir) -> Result<Value, CliError> {
    let (default_reps, default_n) = match a.scenario {
        Scenario::Dominance => (10_000, BATTING_TRUTH.len()),
        Scenario::FdrControl => (500, 5000),
        Scenario::Tweedie => (100, 50_000),
    };
    let mut cfg = SimConfig::new(a.seed, a.reps.unwrap_or(default_reps), a.n.unwrap_or(default_n));
    cfg.keep_traces = a.traces;

    let (scenario, result) = match a.scenario {
        Scenario::Dominance => {
            let sc = DominanceScenario {
                mu: MuSpec::Fixed {
                    mu: BATTING_TRUTH.to_vec(),
                },
                sampling_var: BATTING_SAMPLING_VAR,
                estimator: Estimator::JamesStein,
            };
            let r = certify_dominance(&cfg, &sc)?;
            (serde_json::to_value(&sc)?, r)
        }
        Scenario::FdrControl => {
            let sc = FdrScenario {
                model: TwoGroupsModel::new(
                    0.9,
                    GaussianParams::standard(),
                    AltDensity::Mixture {
                        components: vec![MixtureComponent {
                            weight: 1.0,
                            params: GaussianParams::new(3.0, 1.0)?,
                        }],
                    },
                )?,
                q: a.q,
                side: Side::Right,
            };
            let r = certify_fdr_control(&cfg, &sc)?;
            (serde_json::to_value(&sc)?, r)
        }
        Scenario::Tweedie => {
            let sc = TweedieScenario::new(Prior::SpikeSlab {
                p0: 0.95,
                slab: GaussianParams::new(3.0, 1.0)?,
            });
            let r = certify_tweedie(&cfg, &sc)?;
            (serde_json::to_value(&sc)?, r)
        }
    };
    out.json("simulation.json", &json!({ "scenario": scenario, "result": result }))?;
    Ok(json!({
        "scenario": result.scenario,
        "rng": result.rng,
        "seed": result.seed,
        "replications": result.replications,
        "n": result.n,
        "metrics": result.metrics,
    }))
}
