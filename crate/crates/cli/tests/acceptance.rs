//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero if any fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eefx_core::combinat::{subsets, Partition};
use eefx_core::divider::{divide_bruteforce, divide_constructive, lemma4_partition, lemma5_divide, solve_efl_eefx, ConstructiveDivider};
use eefx_core::efxpart::{efx_partition, efx_partition_traced, is_efx_partition, max_removal};
use eefx_core::fairness::{check_allocation, is_allocation_eefx, is_eefx_feasible, Certificate};
use eefx_core::generate::random_instance;
use eefx_core::instance::ScaledValuation;
use eefx_core::oracle::{brute_force_solve, verify_share_chain, Predicate, DEFAULT_BUDGET};
use eefx_core::shares::ShareContext;
use eefx_core::{Allocation, ExactValue, Instance, ItemSet};

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Duration, Box<dyn Fn() -> Check + 'a>);

fn set(items: &[usize]) -> ItemSet {
    items.iter().map(|g| g - 1).collect()
}

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn err(e: eefx_core::Error) -> String {
    e.to_string()
}

/// Instances `k = 0..count` of the shared random family: n ∈ {2,3}, m ∈ 4..=8, values 0..=20.
fn chain_family(count: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    (0..count)
        .map(|k| {
            let n = rng.gen_range(2..=3);
            let m = rng.gen_range(4..=8);
            random_instance(1000 + k, n, m, 20).unwrap().perturb().unwrap()
        })
        .collect()
}

fn c1_e1() -> Check {
    let row = [1, 299, 101, 101, 101, 98, 98, 99, 99, 100];
    let raw = Instance::from_integers(&[row; 3]).map_err(err)?;
    let low = set(&[1, 2]);
    let cert = Certificate {
        owner: 0,
        bundle: low,
        parts: Partition::new(vec![set(&[3, 8, 9, 10]), set(&[4, 5, 6, 7])], raw.items() - low).map_err(err)?,
    };
    ensure(cert.is_valid(&raw), || "given certificate for {g1,g2} rejected".into())?;
    ensure(is_eefx_feasible(&raw, 0, low).map_err(err)?.is_some(), || "{g1,g2} infeasible".into())?;
    ensure(is_eefx_feasible(&raw, 0, set(&[3, 4, 5])).map_err(err)?.is_none(), || "{g3,g4,g5} feasible".into())?;
    let mxs = ShareContext::new(&raw, 0).map_err(err)?.mxs().map_err(err)?;
    ensure(mxs <= 300.into(), || format!("MXS = {mxs} > 300"))?;

    let inst = raw.perturb().map_err(err)?;
    let theta = ShareContext::new(&inst, 0).map_err(err)?.theta().map_err(err)?;
    ensure(theta > 303.into(), || format!("θ = {theta} <= 303"))?;
    ensure(theta == ExactValue::from_ratio(310_881, 1024), || format!("θ = {theta} differs from frozen 310881/1024"))?;
    Ok(format!("MXS = {mxs}, θ = {theta}"))
}

fn c2_chain(family: &[Instance]) -> Check {
    let mut agents = 0;
    for (k, inst) in family.iter().enumerate() {
        let r = verify_share_chain(inst).map_err(err)?;
        if let Some(a) = r.agents.iter().find(|a| a.violation.is_some()) {
            return Err(format!("instance {k} agent {}: {}", a.agent + 1, a.violation.as_ref().unwrap()));
        }
        agents += r.agents.len();
    }
    Ok(format!("{} instances, {agents} agents, 0 violations", family.len()))
}

fn c3_residual(family: &[Instance]) -> Check {
    let mut agents = 0;
    for (k, inst) in family.iter().enumerate() {
        for i in 0..inst.n() {
            let ctx = ShareContext::new(inst, i).map_err(err)?;
            let theta = ctx.theta().map_err(err)?;
            if let Some(fam) = ctx.residual_violation(&theta).map_err(err)? {
                return Err(format!("instance {k} agent {}: removal family {fam:?}", i + 1));
            }
            agents += 1;
        }
    }
    Ok(format!("{} instances, {agents} agents, 0 violations", family.len()))
}

fn c4_solver() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 0..100u64 {
        let m = rng.gen_range(1..=8);
        let inst = random_instance(4000 + k, 3, m, 20).map_err(err)?;
        let sol = solve_efl_eefx(&inst).map_err(|e| format!("instance {k}: {e}"))?;
        let alloc = sol.to_allocation(&inst).map_err(err)?;
        ensure(alloc.is_complete(), || format!("instance {k}: incomplete allocation"))?;
        ensure(check_allocation(&inst, &alloc).map_err(err)?.is_efl(), || format!("instance {k}: not EFL"))?;
        ensure(is_allocation_eefx(&inst, &alloc).map_err(err)?.is_eefx(), || format!("instance {k}: not EEFX"))?;
        let found = brute_force_solve(&inst, Predicate::EflEefx, DEFAULT_BUDGET).map_err(err)?;
        ensure(found.is_some(), || format!("instance {k}: exhaustive search found nothing"))?;
    }
    Ok("100/100 solved and confirmed".into())
}

fn c5_observations() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bundles = 0u64;
    for k in 0..50u64 {
        let n = rng.gen_range(2..=3);
        let m = rng.gen_range(3..=8);
        let inst = random_instance(5000 + k, n, m, 20).map_err(err)?.perturb().map_err(err)?;
        let i = rng.gen_range(0..n);
        let ctx = ShareContext::new(&inst, i).map_err(err)?;
        let theta = ctx.theta().map_err(err)?;
        let t_value = match ctx.max_infeasible_bundle().map_err(err)? {
            Some(t) => inst.value(i, t).map_err(err)?,
            None => ExactValue::from_integer(-1),
        };
        for b in subsets(inst.items()) {
            let v = inst.value(i, b).map_err(err)?;
            if v >= theta {
                ensure(is_eefx_feasible(&inst, i, b).map_err(err)?.is_some(), || {
                    format!("instance {k}: {b} worth {v} >= θ but infeasible")
                })?;
            }
            ensure((v > t_value) == (v >= theta), || format!("instance {k}: biconditional fails at {b}"))?;
            bundles += 1;
        }
    }
    Ok(format!("50 instances, {bundles} bundles"))
}

/// A random family of 1..n disjoint nonempty bundles each worth less than θ, if one turns up.
fn removal_family(rng: &mut ChaCha8Rng, inst: &Instance, agent: usize, theta: &ExactValue) -> Option<Vec<ItemSet>> {
    let k = rng.gen_range(1..inst.n());
    let mut free = inst.items();
    let mut fam = Vec::new();
    for _ in 0..200 {
        if fam.len() == k {
            return Some(fam);
        }
        let b: ItemSet = free.iter().filter(|_| rng.gen_bool(0.4)).collect();
        if !b.is_empty() && inst.value(agent, b).unwrap() < *theta {
            free = free - b;
            fam.push(b);
        }
    }
    (fam.len() == k).then_some(fam)
}

fn c6_lemmas() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut cases = 0;
    let mut multi = 0;
    let mut attempt = 0u64;
    while cases < 100 {
        attempt += 1;
        let n = rng.gen_range(2..=4);
        let m = rng.gen_range(n..=8);
        let inst = random_instance(6000 + attempt, n, m, 20).map_err(err)?.perturb().map_err(err)?;
        let i = rng.gen_range(0..n);
        let div = ConstructiveDivider::new(&inst, i).map_err(err)?;
        let theta = div.theta();
        let Some(t) = div.t() else { continue };
        let Some(fam) = removal_family(&mut rng, &inst, i, &theta) else { continue };
        let val = inst.valuation(i);
        let need = val.threshold_units(&theta);
        let s = fam.iter().fold(ItemSet::EMPTY, |a, b| a | *b);
        let tag = || format!("case {cases} (seed {}, agent {}, family {fam:?})", 6000 + attempt, i + 1);

        let y = lemma4_partition(&inst, i, &fam).map_err(|e| format!("{}: {e}", tag()))?;
        let yp = y.parts();
        ensure(y.ground() == s && y.k() == fam.len(), || format!("{}: lemma-4 output is not a partition of S", tag()))?;
        ensure((t & s).is_subset(yp[0]) && val.units(yp[0]) < need, || format!("{}: lemma-4 Y1 wrong", tag()))?;
        ensure(max_removal(val, &yp[1..]).is_none_or(|r| r.units < need), || format!("{}: lemma-4 Yj too rich", tag()))?;

        let x = lemma5_divide(&inst, i, &fam).map_err(|e| format!("{}: {e}", tag()))?;
        let xp = x.parts();
        ensure(x.ground() == inst.items() - s && x.k() == n - fam.len(), || format!("{}: lemma-5 not a partition", tag()))?;
        ensure((t - s).is_subset(xp[0]), || format!("{}: lemma-5 X1 misses T \\ S", tag()))?;
        ensure(xp.iter().all(|p| val.units(*p) >= need), || format!("{}: lemma-5 part below θ", tag()))?;

        let d = divide_constructive(&inst, i, &fam).map_err(|e| format!("{}: {e}", tag()))?;
        let pool = inst.items() - s;
        ensure(d.ground() == pool && d.k() == n - fam.len(), || format!("{}: division is not a partition", tag()))?;
        ensure(d.parts().iter().all(|p| val.units(*p) >= need), || format!("{}: division part below θ", tag()))?;
        let brute = divide_bruteforce(&inst, i, pool, n - fam.len(), &theta).map_err(err)?;
        ensure(brute.is_some(), || format!("{}: exhaustive division found nothing", tag()))?;

        if fam.len() > 1 {
            multi += 1;
        }
        cases += 1;
    }
    Ok(format!("100 cases ({multi} with several removed bundles)"))
}

fn c7_efx_partition() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut moves = 0;
    for c in 0..500 {
        let m = rng.gen_range(0..=10);
        let k = rng.gen_range(1..=4);
        let ws: Vec<ExactValue> = (0..m).map(|_| ExactValue::from_integer(rng.gen_range(0..=30))).collect();
        let ground = ItemSet::full(m);
        let val = ScaledValuation::from_values(&ws).map_err(err)?;
        let p = efx_partition(&ws, ground, k).map_err(err)?;
        ensure(p.ground() == ground && p.k() == k, || format!("case {c}: not a {k}-partition"))?;
        ensure(is_efx_partition(&val, p.parts()), || format!("case {c}: {ws:?} k={k} not EFX"))?;
        let trace = efx_partition_traced(&val, ground, k).map_err(err)?;
        ensure(trace.potentials.windows(2).all(|w| w[0] < w[1]), || format!("case {c}: potential did not increase"))?;
        moves += trace.moves();
    }
    Ok(format!("500 vectors, {moves} local-search moves"))
}

fn c8_implications() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut above_mms = 0;
    for c in 0..500u64 {
        let n = rng.gen_range(2..=3);
        let m = rng.gen_range(1..=8);
        let raw = random_instance(8000 + c, n, m, 20).map_err(err)?;
        // zero-valued items break MMS feasibility on raw instances; only the envy checks use `raw`
        let inst = raw.perturb().map_err(err)?;
        let mut bundles = vec![ItemSet::EMPTY; n];
        for g in 0..m {
            let j = rng.gen_range(0..n);
            bundles[j] = bundles[j].with(g);
        }
        let alloc = Allocation::new(&inst, bundles).map_err(err)?;
        for p in check_allocation(&raw, &alloc).map_err(err)?.pairs.iter().chain(&check_allocation(&inst, &alloc).map_err(err)?.pairs) {
            ensure(!p.efx || p.efl, || format!("case {c}: EFX but not EFL for {p:?}"))?;
            ensure(!p.efl || p.ef1, || format!("case {c}: EFL but not EF1 for {p:?}"))?;
        }
        for i in 0..n {
            let (mms, _) = ShareContext::new(&inst, i).map_err(err)?.mms();
            let b = alloc.bundle(i);
            if inst.value(i, b).map_err(err)? >= mms {
                above_mms += 1;
                ensure(is_eefx_feasible(&inst, i, b).map_err(err)?.is_some(), || {
                    format!("case {c}: agent {} bundle {b} reaches MMS {mms} but is infeasible", i + 1)
                })?;
            }
        }
    }
    Ok(format!("500 allocations, {above_mms} bundles at or above MMS"))
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_eefx")).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("eefx {args:?} exited with {}", out.status))?;
    Ok(out.stdout)
}

fn c9_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let witness = dir.path().join("witness.json");
    let witness = witness.to_str().unwrap();
    let runs: [&[&str]; 4] = [
        &["gen", "--seed", "17", "--agents", "3", "--items", "8"],
        &["gen", "--seed", "17", "--agents", "3", "--items", "8", "--non-degenerate"],
        &["verify", "--suite", "random", "--count", "10", "--seed", "7", "--witness", witness],
        &["--format", "json", "verify", "--suite", "random", "--count", "10", "--seed", "7", "--witness", witness],
    ];
    for args in runs {
        let a = run_cli(args)?;
        let b = run_cli(args)?;
        ensure(!a.is_empty() && a == b, || format!("eefx {args:?}: outputs differ"))?;
        let lib_a = eefx_cli::run_args(std::iter::once("eefx").chain(args.iter().copied())).map_err(|e| e.message)?;
        ensure(lib_a.stdout.as_bytes() == a.as_slice(), || format!("eefx {args:?}: library and binary differ"))?;
    }
    Ok("gen and verify byte-identical across runs".into())
}

fn main() {
    let family_start = Instant::now();
    let family = chain_family(200);
    let family_time = family_start.elapsed();

    let criteria: Vec<Criterion> = vec![
        ("E1 golden values", Duration::from_secs(10), Box::new(c1_e1)),
        ("share chain MXS <= θ <= RMMS <= MMS", Duration::from_secs(300), Box::new(|| c2_chain(&family))),
        ("θ residual self-feasible", Duration::from_secs(300), Box::new(|| c3_residual(&family))),
        ("EFL + EEFX solver end to end", Duration::from_secs(600), Box::new(c4_solver)),
        ("θ and the largest infeasible bundle", Duration::from_secs(300), Box::new(c5_observations)),
        ("constructive lemmas and division", Duration::from_secs(300), Box::new(c6_lemmas)),
        ("EFX partition local search", Duration::from_secs(300), Box::new(c7_efx_partition)),
        ("envy implications and MMS feasibility", Duration::from_secs(300), Box::new(c8_implications)),
        ("gen/verify determinism", Duration::from_secs(300), Box::new(c9_determinism)),
    ];

    let mut failed = 0;
    for (k, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let mut took = start.elapsed();
        if k == 1 {
            took += family_time;
        }
        let verdict = match result {
            Ok(_) if took > *limit => Err(format!("took {took:.2?}, limit {limit:?}")),
            other => other,
        };
        match verdict {
            Ok(detail) => println!("criterion {}: PASS  {name} ({detail}; {took:.2?})", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why} ({took:.2?})", k + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
