//! Subcommand implementations and their reports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use eefx_core::divider::{algorithm2, complete_allocation, solve_efl_eefx, DivideStrategy, DividerEvent};
use eefx_core::fairness::{check_allocation, is_allocation_eefx, EflWitness};
use eefx_core::generate::random_instance;
use eefx_core::oracle::{brute_force_solve, verify_share_chain, verify_theorem2, Predicate};
use eefx_core::shares::{ShareContext, MAX_RMMS_ITEMS};
use eefx_core::{Allocation, Error, ExactValue, Instance, ItemSet};

use crate::files::{AllocationFile, InstanceFile};
use crate::table::Table;
use crate::{CliError, Format, Outcome, Threshold, EXIT_AUDIT, EXIT_OK, EXIT_PARSE, EXIT_VIOLATION};

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::new(EXIT_PARSE, format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::new(EXIT_PARSE, format!("{}: {e}", path.display())))
}

pub fn load_instance(path: &Path) -> Result<Instance, CliError> {
    InstanceFile::from_json(&read(path)?)?.to_instance()
}

fn json<T: Serialize>(report: &T) -> String {
    serde_json::to_string_pretty(report).expect("reports serialize") + "\n"
}

fn one_based(s: ItemSet) -> Vec<usize> {
    s.to_one_based()
}

fn show(v: &Option<ExactValue>, missing: &str) -> String {
    v.as_ref().map_or_else(|| missing.to_string(), ToString::to_string)
}

fn elapsed_ms(start: Instant, timing: bool) -> Option<f64> {
    timing.then(|| start.elapsed().as_secs_f64() * 1000.0)
}

/// Integer rescaling, then the 1/2-power perturbation when some agent is degenerate.
fn working_instance(inst: &Instance) -> Result<(Instance, bool), CliError> {
    let scaled = inst.scaled_to_integers();
    if scaled.is_non_degenerate_all()? {
        Ok((scaled, false))
    } else {
        Ok((scaled.perturb()?, true))
    }
}

#[derive(Debug, Serialize)]
pub struct AgentShares {
    pub agent: usize,
    pub non_degenerate: bool,
    pub total: ExactValue,
    pub mms: ExactValue,
    pub mms_witness: Vec<Vec<usize>>,
    pub mxs: ExactValue,
    pub theta: Option<ExactValue>,
    pub t_witness: Option<Vec<usize>>,
    pub rmms: Option<ExactValue>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct AnalyzeReport {
    pub instance: Option<String>,
    pub agents: usize,
    pub items: usize,
    pub perturbed: bool,
    pub shares: Vec<AgentShares>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

pub fn analyze(path: &Path, perturb: bool, timing: bool, format: Format) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let mut inst = load_instance(path)?;
    if perturb {
        inst = inst.scaled_to_integers().perturb()?;
    }
    let mut shares = Vec::with_capacity(inst.n());
    for i in 0..inst.n() {
        let ctx = ShareContext::new(&inst, i)?;
        let non_degenerate = ctx.is_non_degenerate();
        let (mms, witness) = ctx.mms();
        let mut notes = Vec::new();
        let (theta, t_witness) = if non_degenerate {
            (Some(ctx.theta()?), ctx.max_infeasible_bundle()?.map(one_based))
        } else {
            notes.push("θ requires --perturb (degenerate valuation)".to_string());
            (None, None)
        };
        let rmms = if inst.m() <= MAX_RMMS_ITEMS {
            Some(ctx.rmms()?)
        } else {
            notes.push(format!("RMMS skipped: more than {MAX_RMMS_ITEMS} items"));
            None
        };
        shares.push(AgentShares {
            agent: i + 1,
            non_degenerate,
            total: inst.value(i, inst.items())?,
            mms,
            mms_witness: witness.parts().iter().map(|p| one_based(*p)).collect(),
            mxs: ctx.mxs()?,
            theta,
            t_witness,
            rmms,
            notes,
        });
    }
    let report = AnalyzeReport {
        instance: inst.label().map(str::to_string),
        agents: inst.n(),
        items: inst.m(),
        perturbed: perturb,
        shares,
        timing_ms: elapsed_ms(start, timing),
    };
    let stdout = match format {
        Format::Json => json(&report),
        Format::Table => {
            let mut t = Table::new(["agent", "total", "MMS", "MXS", "θ", "RMMS", "T", "non-degenerate"]);
            for s in &report.shares {
                t.row([
                    s.agent.to_string(),
                    s.total.to_string(),
                    s.mms.to_string(),
                    s.mxs.to_string(),
                    show(&s.theta, "requires --perturb"),
                    show(&s.rmms, "skipped"),
                    s.t_witness.as_ref().map_or("-".to_string(), |t| format!("{t:?}")),
                    s.non_degenerate.to_string(),
                ]);
            }
            let mut out = header(&report.instance, report.agents, report.items, report.perturbed);
            out += &t.render();
            if let Some(ms) = report.timing_ms {
                out += &format!("time: {ms:.1} ms\n");
            }
            out
        }
    };
    Ok(Outcome { stdout, code: EXIT_OK })
}

fn header(label: &Option<String>, n: usize, m: usize, perturbed: bool) -> String {
    format!(
        "instance: {}\nagents: {n}  items: {m}  perturbed: {perturbed}\n",
        label.as_deref().unwrap_or("(unnamed)")
    )
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
pub struct Verdicts {
    pub ef: bool,
    pub ef1: bool,
    pub efl: bool,
    pub efx: bool,
    pub eefx: bool,
}

#[derive(Debug, Serialize)]
pub struct PairOut {
    pub envier: usize,
    pub envied: usize,
    pub ef: bool,
    pub ef1: bool,
    pub efl: bool,
    pub efx: bool,
    pub ef1_witness: Option<usize>,
    pub efl_witness: Option<String>,
    pub efx_violation: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct AgentEefx {
    pub agent: usize,
    pub feasible: bool,
    pub certificate: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub instance: Option<String>,
    pub complete: bool,
    pub allocation: Vec<Vec<usize>>,
    pub values: Vec<ExactValue>,
    pub verdicts: Verdicts,
    pub pairs: Vec<PairOut>,
    pub eefx: Vec<AgentEefx>,
}

fn check_report(inst: &Instance, alloc: &Allocation) -> Result<CheckReport, CliError> {
    let envy = check_allocation(inst, alloc)?;
    let eefx = is_allocation_eefx(inst, alloc)?;
    let pairs = envy
        .pairs
        .iter()
        .map(|p| PairOut {
            envier: p.envier + 1,
            envied: p.envied + 1,
            ef: p.ef,
            ef1: p.ef1,
            efl: p.efl,
            efx: p.efx,
            ef1_witness: p.ef1_witness.map(|g| g + 1),
            efl_witness: p.efl_witness.map(|w| match w {
                EflWitness::AtMostOnePositive => "at most one positive item".to_string(),
                EflWitness::Item(g) => format!("g{}", g + 1),
            }),
            efx_violation: p.efx_violation.map(|g| g + 1),
        })
        .collect();
    let agents = eefx
        .certificates
        .iter()
        .enumerate()
        .map(|(i, c)| AgentEefx {
            agent: i + 1,
            feasible: c.is_some(),
            certificate: c.as_ref().map(|c| c.parts.parts().iter().map(|p| one_based(*p)).collect()),
        })
        .collect();
    Ok(CheckReport {
        instance: inst.label().map(str::to_string),
        complete: alloc.is_complete(),
        allocation: alloc.bundles().iter().map(|b| one_based(*b)).collect(),
        values: (0..inst.n()).map(|i| inst.value(i, alloc.bundle(i))).collect::<Result<_, _>>()?,
        verdicts: Verdicts {
            ef: envy.is_ef(),
            ef1: envy.is_ef1(),
            efl: envy.is_efl(),
            efx: envy.is_efx(),
            eefx: eefx.is_eefx(),
        },
        pairs,
        eefx: agents,
    })
}

fn render_check(r: &CheckReport) -> String {
    let v = r.verdicts;
    let mut out = format!(
        "complete: {}\nEF: {}  EF1: {}  EFL: {}  EFX: {}  EEFX: {}\n\n",
        r.complete, v.ef, v.ef1, v.efl, v.efx, v.eefx
    );
    let mut bundles = Table::new(["agent", "bundle", "value", "EEFX", "certificate"]);
    for (i, b) in r.allocation.iter().enumerate() {
        let e = &r.eefx[i];
        bundles.row([
            (i + 1).to_string(),
            format!("{b:?}"),
            r.values[i].to_string(),
            e.feasible.to_string(),
            e.certificate.as_ref().map_or("-".to_string(), |c| format!("{c:?}")),
        ]);
    }
    out += &bundles.render();
    out += "\n";
    let mut pairs = Table::new(["envier", "envied", "EF", "EF1", "EFL", "EFX", "EF1 witness", "EFL witness", "EFX violation"]);
    let item = |g: Option<usize>| g.map_or("-".to_string(), |g| format!("g{g}"));
    for p in &r.pairs {
        pairs.row([
            p.envier.to_string(),
            p.envied.to_string(),
            p.ef.to_string(),
            p.ef1.to_string(),
            p.efl.to_string(),
            p.efx.to_string(),
            item(p.ef1_witness),
            p.efl_witness.clone().unwrap_or_else(|| "-".to_string()),
            item(p.efx_violation),
        ]);
    }
    out + &pairs.render()
}

pub fn check(instance: &Path, allocation: &Path, format: Format) -> Result<Outcome, CliError> {
    let inst = load_instance(instance)?;
    let alloc = AllocationFile::from_json(&read(allocation)?)?.to_allocation(&inst)?;
    let report = check_report(&inst, &alloc)?;
    let stdout = match format {
        Format::Json => json(&report),
        Format::Table => header(&report.instance, inst.n(), inst.m(), false) + &render_check(&report),
    };
    Ok(Outcome { stdout, code: EXIT_OK })
}

pub struct SolveArgs {
    pub path: PathBuf,
    pub out: Option<PathBuf>,
    pub threshold: Threshold,
    pub oracle: bool,
    pub budget: u64,
    pub dump: PathBuf,
    pub timing: bool,
}

#[derive(Debug, Serialize)]
pub struct SolveReport {
    pub method: &'static str,
    pub threshold: &'static str,
    pub perturbed: bool,
    /// Per-agent thresholds on the working (integer-scaled, perhaps perturbed) instance.
    pub thresholds: Option<Vec<ExactValue>>,
    pub rounds: Option<usize>,
    pub reassignments: Option<usize>,
    pub check: CheckReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

fn audit_failure(dump_path: &Path, reason: &str, dump: &str) -> CliError {
    match write(dump_path, dump) {
        Ok(()) => CliError::new(EXIT_AUDIT, format!("{reason}; state dump written to {}", dump_path.display())),
        Err(e) => CliError::new(EXIT_AUDIT, format!("{reason}; could not write state dump: {e}")),
    }
}

struct Solved {
    bundles: Vec<ItemSet>,
    perturbed: bool,
    thresholds: Option<Vec<ExactValue>>,
    rounds: Option<usize>,
    reassignments: Option<usize>,
}

fn count_reassignments(events: &[DividerEvent]) -> usize {
    events.iter().filter(|e| matches!(e, DividerEvent::Reassigned { .. })).count()
}

fn solve_with_threshold(inst: &Instance, threshold: Threshold, dump: &Path) -> Result<Solved, CliError> {
    let (working, perturbed) = working_instance(inst)?;
    let thresholds = (0..working.n())
        .map(|i| {
            let ctx = ShareContext::new(&working, i)?;
            match threshold {
                Threshold::Rmms => ctx.rmms(),
                _ => Ok(ctx.mms().0),
            }
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let state = match algorithm2(&working, &thresholds, DivideStrategy::BruteForce) {
        Ok(s) => s,
        Err(Error::Invariant(msg)) => {
            return Err(audit_failure(dump, "lone divider failed at the requested thresholds", &msg));
        }
        Err(e) => return Err(e.into()),
    };
    let alloc = complete_allocation(&working, &state)?;
    let envy = check_allocation(inst, &alloc)?;
    let eefx = is_allocation_eefx(inst, &alloc)?;
    if !envy.is_efl() || !eefx.is_eefx() {
        let dump_text = format!("{state:#?}\n{:?}\n{envy:#?}\n{eefx:#?}", alloc.bundles());
        return Err(audit_failure(dump, "allocation failed the EFL or EEFX audit", &dump_text));
    }
    Ok(Solved {
        bundles: alloc.bundles().to_vec(),
        perturbed,
        thresholds: Some(thresholds),
        rounds: Some(state.round),
        reassignments: Some(count_reassignments(&state.events)),
    })
}

pub fn solve(args: &SolveArgs, format: Format) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let inst = load_instance(&args.path)?;
    let threshold_name = match args.threshold {
        Threshold::Theta => "theta",
        Threshold::Rmms => "rmms",
        Threshold::Mms => "mms",
    };
    let solved = if args.oracle {
        match brute_force_solve(&inst, Predicate::EflEefx, args.budget)? {
            Some(a) => Solved {
                bundles: a.bundles().to_vec(),
                perturbed: false,
                thresholds: None,
                rounds: None,
                reassignments: None,
            },
            None => {
                return Err(audit_failure(&args.dump, "exhaustive search found no EFL + EEFX allocation", "no allocation"))
            }
        }
    } else if args.threshold == Threshold::Theta {
        match solve_efl_eefx(&inst) {
            Ok(sol) => Solved {
                bundles: sol.allocation.clone(),
                perturbed: sol.perturbed,
                rounds: Some(sol.state.round),
                reassignments: Some(count_reassignments(&sol.state.events)),
                thresholds: Some(sol.thetas),
            },
            Err(Error::Audit { reason, dump }) => return Err(audit_failure(&args.dump, &reason, &dump)),
            Err(e) => return Err(e.into()),
        }
    } else {
        solve_with_threshold(&inst, args.threshold, &args.dump)?
    };
    let alloc = Allocation::new(&inst, solved.bundles.clone())?;
    if let Some(out) = &args.out {
        write(out, &AllocationFile::from_bundles(alloc.bundles()).to_json())?;
    }
    let report = SolveReport {
        method: if args.oracle { "exhaustive" } else { "lone_divider" },
        threshold: threshold_name,
        perturbed: solved.perturbed,
        thresholds: solved.thresholds,
        rounds: solved.rounds,
        reassignments: solved.reassignments,
        check: check_report(&inst, &alloc)?,
        timing_ms: elapsed_ms(start, args.timing),
    };
    let stdout = match format {
        Format::Json => json(&report),
        Format::Table => {
            let mut out = header(&report.check.instance, inst.n(), inst.m(), report.perturbed);
            out += &format!("method: {}  threshold: {}\n", report.method, report.threshold);
            if let Some(th) = &report.thresholds {
                let th: Vec<String> = th.iter().map(ToString::to_string).collect();
                out += &format!("thresholds (working instance): {}\n", th.join(", "));
            }
            if let (Some(r), Some(x)) = (report.rounds, report.reassignments) {
                out += &format!("matching rounds: {r}  reassignments: {x}\n");
            }
            out += &render_check(&report.check);
            if let Some(ms) = report.timing_ms {
                out += &format!("time: {ms:.1} ms\n");
            }
            out
        }
    };
    Ok(Outcome { stdout, code: EXIT_OK })
}

pub fn gen(seed: u64, agents: usize, items: usize, vmax: u64, non_degenerate: bool, out: Option<&Path>) -> Result<Outcome, CliError> {
    let mut inst = random_instance(seed, agents, items, vmax)?;
    if non_degenerate {
        inst = inst.perturb()?;
    }
    let text = InstanceFile::from_instance(&inst).to_json();
    match out {
        Some(path) => {
            write(path, &text)?;
            Ok(Outcome { stdout: String::new(), code: EXIT_OK })
        }
        None => Ok(Outcome { stdout: text, code: EXIT_OK }),
    }
}

pub enum VerifySource {
    File(PathBuf),
    Random { count: u64, seed: u64, agents: usize, items: usize, vmax: u64 },
}

#[derive(Debug, Serialize)]
pub struct ChainRow {
    pub agent: usize,
    pub mxs: ExactValue,
    pub theta: ExactValue,
    pub rmms: ExactValue,
    pub mms: ExactValue,
    pub theta_minus_mxs: ExactValue,
    pub mms_minus_theta: ExactValue,
    pub ok: bool,
}

#[derive(Debug, Serialize)]
pub struct Theorem2Row {
    pub agent: usize,
    pub ok: bool,
    pub families_checked: u64,
}

#[derive(Debug, Serialize)]
pub struct CaseReport {
    pub index: u64,
    pub seed: Option<u64>,
    pub instance: Option<String>,
    pub perturbed: bool,
    pub chain: Vec<ChainRow>,
    pub theorem2: Vec<Theorem2Row>,
    pub solver_ok: bool,
    /// Whether the exhaustive search found an EFL + EEFX allocation; `None` when skipped.
    pub oracle_found: Option<bool>,
    pub violations: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub source: String,
    pub cases: Vec<CaseReport>,
    pub passed: u64,
    pub failed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Witness<'a> {
    case: &'a CaseReport,
    instance: InstanceFile,
}

fn verify_case(inst: &Instance, index: u64, seed: Option<u64>, budget: u64) -> Result<CaseReport, CliError> {
    let (working, perturbed) = working_instance(inst)?;
    let mut violations = Vec::new();

    let chain = verify_share_chain(&working)?;
    for a in &chain.agents {
        if let Some(v) = &a.violation {
            violations.push(format!("agent {}: share chain broken: {v}", a.agent + 1));
        }
    }
    let mut theorem2 = Vec::with_capacity(inst.n());
    for i in 0..inst.n() {
        let r = verify_theorem2(&working, i)?;
        if let Some(f) = &r.residual_violation {
            let f: Vec<String> = f.iter().map(ToString::to_string).collect();
            violations.push(format!("agent {}: θ not residual self-feasible, removed [{}]", i + 1, f.join(", ")));
        }
        if let Some((fam, err)) = &r.constructive_failure {
            let fam: Vec<String> = fam.iter().map(ToString::to_string).collect();
            violations.push(format!("agent {}: constructive division failed for [{}]: {err}", i + 1, fam.join(", ")));
        }
        theorem2.push(Theorem2Row { agent: i + 1, ok: r.ok(), families_checked: r.families_checked });
    }
    let solver_ok = match solve_efl_eefx(inst) {
        Ok(_) => true,
        Err(e @ (Error::Audit { .. } | Error::Invariant(_))) => {
            violations.push(format!("solver: {e}"));
            false
        }
        Err(e) => return Err(e.into()),
    };
    let within_budget = budget > 0
        && (0..inst.m()).try_fold(1u64, |acc, _| acc.checked_mul(inst.n() as u64).filter(|&x| x <= budget)).is_some();
    let oracle_found = if within_budget {
        let found = brute_force_solve(inst, Predicate::EflEefx, budget)?.is_some();
        if !found {
            violations.push("exhaustive search found no EFL + EEFX allocation".to_string());
        }
        Some(found)
    } else {
        None
    };
    Ok(CaseReport {
        index,
        seed,
        instance: inst.label().map(str::to_string),
        perturbed,
        chain: chain
            .agents
            .into_iter()
            .map(|a| ChainRow {
                agent: a.agent + 1,
                ok: a.violation.is_none(),
                mxs: a.mxs,
                theta: a.theta,
                rmms: a.rmms,
                mms: a.mms,
                theta_minus_mxs: a.theta_minus_mxs,
                mms_minus_theta: a.mms_minus_theta,
            })
            .collect(),
        theorem2,
        solver_ok,
        oracle_found,
        violations,
    })
}

pub fn verify(source: &VerifySource, budget: u64, witness: &Path, timing: bool, format: Format) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let (label, instances): (String, Vec<(Instance, Option<u64>)>) = match source {
        VerifySource::File(p) => (p.display().to_string(), vec![(load_instance(p)?, None)]),
        VerifySource::Random { count, seed, agents, items, vmax } => {
            let list = (0..*count)
                .map(|k| {
                    let s = seed.wrapping_add(k);
                    random_instance(s, *agents, *items, *vmax).map(|inst| (inst, Some(s)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            (format!("random suite: count={count} seed={seed} agents={agents} items={items} vmax={vmax}"), list)
        }
    };
    let mut cases = Vec::with_capacity(instances.len());
    let mut failures = Vec::new();
    for (k, (inst, seed)) in instances.iter().enumerate() {
        let case = verify_case(inst, k as u64, *seed, budget)?;
        if !case.violations.is_empty() {
            failures.push(k);
        }
        cases.push(case);
    }
    let failed = failures.len() as u64;
    let report = VerifyReport {
        source: label,
        passed: cases.len() as u64 - failed,
        failed,
        cases,
        timing_ms: elapsed_ms(start, timing),
    };
    if failed > 0 {
        let items: Vec<Witness> = failures
            .iter()
            .map(|&k| Witness { case: &report.cases[k], instance: InstanceFile::from_instance(&instances[k].0) })
            .collect();
        write(witness, &json(&items))?;
    }
    let mut stdout = match format {
        Format::Json => json(&report),
        Format::Table => {
            let mut t = Table::new(["case", "seed", "perturbed", "chain", "θ residual", "families", "solver", "oracle", "status"]);
            for c in &report.cases {
                let families: u64 = c.theorem2.iter().map(|r| r.families_checked).sum();
                t.row([
                    c.index.to_string(),
                    c.seed.map_or("-".to_string(), |s| s.to_string()),
                    c.perturbed.to_string(),
                    ok(c.chain.iter().all(|r| r.ok)),
                    ok(c.theorem2.iter().all(|r| r.ok)),
                    families.to_string(),
                    ok(c.solver_ok),
                    c.oracle_found.map_or("skipped".to_string(), ok),
                    if c.violations.is_empty() { "PASS" } else { "FAIL" }.to_string(),
                ]);
            }
            let mut out = format!("{}\n", report.source);
            out += &t.render();
            for c in report.cases.iter().filter(|c| !c.violations.is_empty()) {
                for v in &c.violations {
                    out += &format!("case {}: {v}\n", c.index);
                }
            }
            out += &format!("passed {}/{}\n", report.passed, report.passed + report.failed);
            if let Some(ms) = report.timing_ms {
                out += &format!("time: {ms:.1} ms\n");
            }
            out
        }
    };
    if failed > 0 {
        stdout += &format!("witness written to {}\n", witness.display());
    }
    Ok(Outcome { stdout, code: if failed > 0 { EXIT_VIOLATION } else { EXIT_OK } })
}

fn ok(b: bool) -> String {
    if b { "ok" } else { "FAIL" }.to_string()
}
