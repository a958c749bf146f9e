use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use levelling_core::bolts::{
    self, best_lower_bound, certified_value, enumerate_bolts, enumerate_closed_bolts,
    extract_bolt_from_residual, isolated_points, max_irreducible_bolt_length, shortest_bolt,
    IrreducibleMax, LowerBoundBudget, EXTRACTION_SLACKS,
};
use levelling_core::diagnostics::{
    closedness_sweep, cproperty_jump, medvedev_sweep, multi_factor_gap, multifactor_search,
    slice_averaging_check, MultiFactorGap, SweepReport,
};
use levelling_core::domain::generate_domain;
use levelling_core::expr::Expr;
use levelling_core::levelling::{run_levelling_with, LogRow};
use levelling_core::oracle::{lp_exact_error, n_factor_error, verify_certificate, CertificateCheck, OracleResult};
use levelling_core::{Domain, Field, Region, StoppingRule, Termination};
use rayon::prelude::*;
use serde::Serialize;

use crate::svg::{line_chart, Series};
use crate::{
    BoltsCommand, Command, DiagnoseCommand, DomainArgs, FieldArgs, Format, GenArgs, OracleArgs,
    RunArgs, StopArgs, SweepArgs, SweepRegionArgs,
};

/// Walk length parameter for residual bolt extraction.
const EXTRACT_K: usize = 4096;

pub fn dispatch(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Oracle(a) => oracle(a),
        Command::Bolts(c) => bolts_cmd(c),
        Command::Diagnose(c) => diagnose(c),
        Command::Sweep(a) => sweep(a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())?;
            so.flush()?;
            Ok(())
        }
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Serialized name of a unit-like enum value.
fn tag<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

impl DomainArgs {
    fn load(&self) -> Result<Domain> {
        if let Some(p) = &self.domain {
            return Domain::load(p).with_context(|| format!("loading domain {}", p.display()));
        }
        let name = self
            .region
            .as_deref()
            .ok_or_else(|| anyhow!("need --domain FILE or --region NAME"))?;
        let region = Region::parse(name, &self.params)?;
        Ok(generate_domain(&region, self.res.unwrap_or(1))?)
    }

    fn given(&self) -> bool {
        self.domain.is_some() || self.region.is_some()
    }
}

impl FieldArgs {
    fn load(&self, d: &Domain) -> Result<Field> {
        if let Some(p) = &self.field {
            let f = Field::load(p).with_context(|| format!("loading field {}", p.display()))?;
            f.check(d)?;
            return Ok(f);
        }
        match &self.expr {
            Some(e) => Ok(Expr::parse(e)?.field(d)?),
            None => bail!("need --field FILE or --expr EXPRESSION"),
        }
    }
}

impl StopArgs {
    fn rule(&self) -> Result<StoppingRule> {
        if !(self.tol >= 0.0) {
            bail!("--tol must be nonnegative");
        }
        if self.max_steps < 1 || self.window < 1 {
            bail!("--max-steps and --window must be at least 1");
        }
        Ok(StoppingRule {
            tol: self.tol,
            window: self.window,
            max_steps: self.max_steps,
        })
    }
}

impl SweepRegionArgs {
    fn region(&self) -> Result<Region> {
        Ok(Region::parse(&self.region, &self.params)?)
    }
}

fn gen(a: GenArgs) -> Result<u8> {
    let d = generate_domain(&Region::parse(&a.region, &a.params)?, a.res)?;
    emit(a.out.as_deref(), &(d.to_json()? + "\n"))?;
    log::info!("{} points, class counts {:?}", d.num_points(), d.class_counts());
    Ok(0)
}

fn run(a: RunArgs) -> Result<u8> {
    let stop = a.stop.rule()?;
    let d = a.domain.load()?;
    let h = a.field.load(&d)?;
    let schedule: Vec<usize> = if a.schedule.is_empty() {
        (0..d.num_factors()).collect()
    } else {
        a.schedule.clone()
    };
    if a.lower_bound_every > 0 && d.num_factors() != 2 {
        bail!("--lower-bound-every needs a two-factor domain");
    }
    let mut rows = Vec::new();
    let mut best: f64 = 0.0;
    let st = run_levelling_with(&d, &h, &stop, &schedule, false, |st| {
        let k = st.step_count;
        let lower_bound = (a.lower_bound_every > 0 && k % a.lower_bound_every == 0).then(|| {
            for &slack in EXTRACTION_SLACKS {
                if let Ok(Some(b)) = extract_bolt_from_residual(st, &d, EXTRACT_K, slack) {
                    best = best.max(certified_value(&b, &st.target));
                }
            }
            best
        });
        rows.push(LogRow {
            step: k,
            factor: st.visited[k - 1],
            norm: st.norm(),
            lower_bound,
        });
    })?;
    let log = match a.format {
        Format::Csv => {
            let mut s = String::from("step,factor,norm,lower_bound\n");
            for r in &rows {
                let lb = r.lower_bound.map(|v| format!("{v:?}")).unwrap_or_default();
                let _ = writeln!(s, "{},{},{:?},{lb}", r.step, r.factor, r.norm);
            }
            s
        }
        Format::Json => json(&rows)?,
        Format::Svg => line_chart(
            "residual norm",
            "step",
            "norm",
            &[Series {
                label: "norm".into(),
                points: st
                    .norm_history
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| (k as f64, v))
                    .collect(),
            }],
        ),
    };
    emit(a.out.as_deref(), &log)?;
    if let Some(p) = &a.state {
        fs::write(p, serde_json::to_string(&st)? + "\n")
            .with_context(|| format!("writing {}", p.display()))?;
    }
    let term = st.termination.unwrap_or(Termination::MaxSteps);
    eprintln!("{}: {} steps, norm {}", tag(&term), st.step_count, st.norm());
    Ok(match term {
        Termination::Converged => 0,
        Termination::MaxSteps => 2,
    })
}

#[derive(Serialize)]
struct OracleReport<'a> {
    #[serde(flatten)]
    result: &'a OracleResult,
    certificate: CertificateCheck,
}

fn oracle(a: OracleArgs) -> Result<u8> {
    let d = a.domain.load()?;
    let h = a.field.load(&d)?;
    let (dd, r) = if a.all_factors {
        (d.clone(), n_factor_error(&d, &h)?)
    } else if d.num_factors() == 2 {
        (d.clone(), lp_exact_error(&d, &h)?)
    } else {
        let two = d.select_factors(&[0, 1])?;
        let r = lp_exact_error(&two, &h)?;
        (two, r)
    };
    let certificate = verify_certificate(&dd, &h, &r);
    if let CertificateCheck::Fail(m) = &certificate {
        log::warn!("certificate check failed: {m}");
    }
    emit(a.out.as_deref(), &json(&OracleReport { result: &r, certificate })?)?;
    Ok(0)
}

#[derive(Serialize)]
struct IrreducibleReport {
    points: usize,
    isolated: usize,
    cap: usize,
    max_irreducible_len: IrreducibleMax,
}

fn bolts_cmd(c: BoltsCommand) -> Result<u8> {
    match c {
        BoltsCommand::LowerBound {
            domain,
            field,
            stop,
            enum_len,
            enum_max_points,
            witness,
            out,
            format,
        } => {
            let d = domain.load()?;
            let h = field.load(&d)?;
            let budget = LowerBoundBudget {
                enumerate_max_len: enum_len,
                enumerate_max_points: enum_max_points,
                stop: stop.rule()?,
                extract_k: EXTRACT_K,
            };
            let lb = best_lower_bound(&d, &h, &budget)?;
            if let (Some(p), Some(b)) = (&witness, &lb.witness) {
                fs::write(p, json(b)?).with_context(|| format!("writing {}", p.display()))?;
            }
            let text = match format {
                Format::Json => json(&lb)?,
                Format::Csv => format!(
                    "value,length,closed,witness_file\n{:?},{},{},{}\n",
                    lb.value,
                    lb.witness.as_ref().map_or(0, |b| b.len()),
                    lb.witness.is_some(),
                    match (&witness, &lb.witness) {
                        (Some(p), Some(_)) => p.display().to_string(),
                        _ => String::new(),
                    }
                ),
                Format::Svg => bail!("lower-bound supports csv or json"),
            };
            emit(out.as_deref(), &text)?;
            Ok(0)
        }
        BoltsCommand::Shortest {
            domain,
            from,
            to,
            out,
        } => {
            let d = domain.load()?;
            emit(out.as_deref(), &json(&shortest_bolt(&d, from, to)?)?)?;
            Ok(0)
        }
        BoltsCommand::Enumerate {
            domain,
            max_len,
            closed,
            out,
            format,
        } => {
            let d = domain.load()?;
            let list = if closed {
                enumerate_closed_bolts(&d, max_len)?
            } else {
                if max_len > bolts::ENUMERATION_MAX_LEN {
                    bail!("--max-len is limited to {}", bolts::ENUMERATION_MAX_LEN);
                }
                enumerate_bolts(&d, max_len)
            };
            let text = match format {
                Format::Json => json(&list)?,
                Format::Csv => {
                    let mut s = String::from("start_relation,length,points\n");
                    for b in &list {
                        let pts: Vec<String> = b.points.iter().map(|p| p.to_string()).collect();
                        let _ = writeln!(s, "{},{},{}", b.start_relation, b.len(), pts.join(" "));
                    }
                    s
                }
                Format::Svg => bail!("enumerate supports csv or json"),
            };
            emit(out.as_deref(), &text)?;
            Ok(0)
        }
        BoltsCommand::IrreducibleMax {
            domain,
            cap,
            out,
            format,
        } => {
            let d = domain.load()?;
            let m = max_irreducible_bolt_length(&d, cap);
            let text = match format {
                Format::Csv => match &m {
                    IrreducibleMax::Max(v) => format!("{v}\n"),
                    IrreducibleMax::ExceedsCap => "exceeds_cap\n".into(),
                },
                Format::Json => json(&IrreducibleReport {
                    points: d.num_points(),
                    isolated: isolated_points(&d).len(),
                    cap,
                    max_irreducible_len: m,
                })?,
                Format::Svg => bail!("irreducible-max supports csv or json"),
            };
            emit(out.as_deref(), &text)?;
            Ok(0)
        }
    }
}

fn report_text(rep: &SweepReport, format: Format, metric: &str, title: &str) -> Result<String> {
    match format {
        Format::Csv => Ok(rep.to_csv()),
        Format::Json => Ok(rep.to_json()? + "\n"),
        Format::Svg => {
            let vals = rep.metric(metric).ok_or_else(|| {
                anyhow!(
                    "unknown metric `{metric}` (have: {})",
                    rep.metrics.keys().cloned().collect::<Vec<_>>().join(", ")
                )
            })?;
            let points = rep
                .resolutions
                .iter()
                .zip(vals)
                .map(|(&n, &v)| (f64::from(n), v))
                .collect();
            Ok(line_chart(
                title,
                "resolution N",
                metric,
                &[Series {
                    label: metric.to_string(),
                    points,
                }],
            ))
        }
    }
}

fn diagnose(c: DiagnoseCommand) -> Result<u8> {
    match c {
        DiagnoseCommand::Cproperty {
            region,
            expr,
            out,
            format,
        } => {
            let rep = cproperty_jump(&region.region()?, &Expr::parse(&expr)?, &region.res)?;
            eprintln!("{}", rep.summary);
            emit(
                out.as_deref(),
                &report_text(&rep, format, "max_jump_f0", &format!("{} on {}", expr, region.region))?,
            )?;
        }
        DiagnoseCommand::Medvedev {
            region,
            cap,
            out,
            format,
        } => {
            let rep = medvedev_sweep(&region.region()?, &region.res, cap)?;
            eprintln!("{}", rep.summary);
            emit(
                out.as_deref(),
                &report_text(&rep, format, "max_irreducible_len", &region.region)?,
            )?;
        }
        DiagnoseCommand::Kconst {
            region,
            expr,
            stop,
            out,
            format,
        } => {
            let rep = closedness_sweep(&region.region()?, &Expr::parse(&expr)?, &region.res, &stop.rule()?)?;
            eprintln!("{}", rep.summary);
            emit(
                out.as_deref(),
                &report_text(&rep, format, "k_estimate", &format!("{} on {}", expr, region.region))?,
            )?;
        }
        DiagnoseCommand::Slices {
            domain,
            field,
            a,
            b,
            out,
        } => {
            let d = domain.load()?;
            let h = field.load(&d)?;
            let rep = slice_averaging_check(&d, &h, a, b)?;
            eprintln!("{}", rep.flag);
            emit(out.as_deref(), &json(&rep)?)?;
        }
        DiagnoseCommand::Multifactor {
            domain,
            field,
            seed,
            count,
            stop,
            out,
            format,
        } => {
            let stop = stop.rule()?;
            let gaps: Vec<MultiFactorGap> = if domain.given() {
                let d = domain.load()?;
                let h = field.load(&d)?;
                vec![multi_factor_gap(&d, &h, &stop)?]
            } else {
                multifactor_search(seed, count, &stop)?
            };
            let min = gaps.iter().map(|g| g.gap).fold(f64::INFINITY, f64::min);
            let max = gaps.iter().map(|g| g.gap).fold(f64::NEG_INFINITY, f64::max);
            let stalls = gaps.iter().filter(|g| g.stall_witness).count();
            eprintln!("{} instances, gap in [{min}, {max}], {stalls} stall witnesses", gaps.len());
            let text = match format {
                Format::Json => json(&gaps)?,
                Format::Csv => {
                    let mut s = String::from(
                        "instance,factors,terminal_norm,oracle_error,gap,steps,cycles,termination,oracle_status,stall_witness\n",
                    );
                    for (i, g) in gaps.iter().enumerate() {
                        let _ = writeln!(
                            s,
                            "{i},{},{:?},{:?},{:?},{},{},{},{},{}",
                            g.factors,
                            g.terminal_norm,
                            g.oracle_error,
                            g.gap,
                            g.steps,
                            g.cycles,
                            tag(&g.termination),
                            tag(&g.oracle_status),
                            g.stall_witness
                        );
                    }
                    s
                }
                Format::Svg => bail!("multifactor supports csv or json"),
            };
            emit(out.as_deref(), &text)?;
        }
    }
    Ok(0)
}

struct SweepCell {
    points: usize,
    history: Vec<f64>,
    terminal_norm: f64,
    lp_error: f64,
    steps: usize,
    effective_steps: usize,
    irreducible: Option<usize>,
    converged: bool,
}

fn sweep(a: SweepArgs) -> Result<u8> {
    let stop = a.stop.rule()?;
    let region = a.region.region()?;
    let expr = Expr::parse(&a.expr)?;
    let cells: Vec<Result<SweepCell>> = a
        .region
        .res
        .par_iter()
        .map(|&n| {
            let mut d = generate_domain(&region, n)?;
            if d.num_factors() > 2 {
                d = d.select_factors(&[0, 1])?;
            }
            let h = expr.field(&d)?;
            let st = run_levelling_with(&d, &h, &stop, &[0, 1], false, |_| {})?;
            let lp = lp_exact_error(&d, &h)?;
            Ok(SweepCell {
                points: d.num_points(),
                terminal_norm: st.norm(),
                lp_error: lp.error,
                steps: st.step_count,
                effective_steps: st.effective_steps(stop.tol.max(1e-12)),
                irreducible: max_irreducible_bolt_length(&d, a.cap).value(),
                converged: st.termination == Some(Termination::Converged),
                history: st.norm_history,
            })
        })
        .collect();
    let cells: Vec<SweepCell> = cells.into_iter().collect::<Result<_>>()?;

    let mut rep = SweepReport {
        resolutions: a.region.res.clone(),
        metrics: Default::default(),
        verdicts: Vec::new(),
        summary: String::new(),
    };
    let mut put = |name: &str, v: f64| rep.metrics.entry(name.to_string()).or_default().push(v);
    for c in &cells {
        put("points", c.points as f64);
        put("terminal_norm", c.terminal_norm);
        put("lp_error", c.lp_error);
        put("gap", c.terminal_norm - c.lp_error);
        put("steps", c.steps as f64);
        put("effective_steps", c.effective_steps as f64);
        put("max_irreducible_len", c.irreducible.map_or(f64::NAN, |v| v as f64));
    }
    for c in &cells {
        rep.verdicts.push(if c.converged { "converged".into() } else { "max_steps".into() });
    }
    rep.summary = format!(
        "{} of {} resolutions converged",
        cells.iter().filter(|c| c.converged).count(),
        cells.len()
    );
    eprintln!("{}", rep.summary);
    let title = format!("{} on {}", a.expr, a.region.region);
    emit(a.out.as_deref(), &report_text(&rep, a.format, &a.metric, &title)?)?;

    if let Some(p) = &a.norm_chart {
        let series: Vec<Series> = a
            .region
            .res
            .iter()
            .zip(&cells)
            .map(|(n, c)| Series {
                label: format!("N = {n}"),
                points: c.history.iter().enumerate().map(|(k, &v)| (k as f64, v)).collect(),
            })
            .collect();
        write_chart(p, &line_chart(&title, "step", "residual norm", &series))?;
    }
    Ok(if cells.iter().all(|c| c.converged) { 0 } else { 2 })
}

fn write_chart(p: &Path, svg: &str) -> Result<()> {
    fs::write(p, svg).with_context(|| format!("writing {}", p.display()))
}
