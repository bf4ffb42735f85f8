//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scdetect::config::{parse_gamma_list, ExperimentConfig, Gamma};
use scdetect::experiments;
use scdetect::trace_io::{read_trace, write_trace};
use scdetect_core::calibration::{calibrate_thresholds, CalibrationCorpus, RunSummary};
use scdetect_core::simkernel::VerdictSource;
use scdetect_core::workloads::presets::{preset_names, EVAL_BENIGN, EVAL_DIRECT, EVAL_INDIRECT};
use scdetect_core::workloads::{apply_noise, generate, preset, scale_rates, NoiseCoefficients};
use scdetect_core::{
    advance, evaluate_predicates, run_simulation, update_score, EventWindowSample, Fraction,
    MachineTopology, MitigationPolicy, Pid, PredicateVector, ProcessMonitorState, Scenario,
    ScoreConfig, ScoreEventKind, SimEventKind, SimReport, Thresholds, Trace, TraceRecord, Verdict,
    WindowConfig, WindowState, WorkloadLabel,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn big(n: u64) -> BigInt {
    BigInt::from(n)
}

fn q(n: u64, d: u64) -> BigRational {
    // ordering does not need reduced fractions
    BigRational::new_raw(big(n), big(d))
}

fn fq(f: &Fraction) -> BigRational {
    q(*f.numer(), *f.denom())
}

// ---------------------------------------------------------------------------
// 1

fn division_oracle(s: &EventWindowSample, t: &Thresholds) -> PredicateVector {
    if s.l1_miss == 0 {
        return PredicateVector::INCONCLUSIVE;
    }
    let l1 = s.l1_miss;
    let p1 = q(s.l2_miss, l1) > fq(&t.phi1);
    let p2 = q(s.llc_miss, l1) > fq(&t.phi2);
    let p4 = q(s.tlb_miss_l2, l1) > fq(&t.phi4);
    let p5 = q(s.tlb_miss_l2, l1) < fq(&t.phi5);
    let p3 = if s.l2_lines_in == 0 {
        // P3 undefined: only matters when everything else points at S1
        if p1 && p2 && p5 && !p4 {
            return PredicateVector::INCONCLUSIVE;
        }
        false
    } else {
        q(s.l2_write_back, s.l2_lines_in) < fq(&t.phi3)
    };
    let s1 = p1 && p2 && p3 && p5;
    PredicateVector {
        p1,
        p2,
        p3,
        p4,
        p5,
        s1,
        s: s1 || p4,
        inconclusive: false,
    }
}

fn count(rng: &mut ChaCha8Rng) -> u64 {
    match rng.random_range(0..4) {
        0 => rng.random_range(0..8),
        1 => rng.random_range(0..100_000),
        2 => rng.random(),
        _ => u64::MAX - rng.random_range(0..8),
    }
}

fn fraction(rng: &mut ChaCha8Rng) -> Fraction {
    let d = count(rng).max(1);
    let n = match rng.random_range(0..3) {
        0 => rng.random_range(0..=d.min(1 << 20)),
        _ => count(rng),
    };
    Fraction::new(n, d)
}

fn random_pair(rng: &mut ChaCha8Rng) -> (EventWindowSample, Thresholds) {
    let s = EventWindowSample::from_events(core::array::from_fn(|_| count(rng)), 1 << 20);
    let mut t = Thresholds::from_array(core::array::from_fn(|_| fraction(rng)));
    // a share of thresholds sit exactly on the sample's own ratios
    if s.l1_miss > 0 && rng.random_bool(0.2) {
        t.phi1 = Fraction::new(s.l2_miss, s.l1_miss);
        t.phi4 = Fraction::new(s.tlb_miss_l2, s.l1_miss);
        t.phi5 = Fraction::new(s.tlb_miss_l2, s.l1_miss);
    }
    if s.l2_lines_in > 0 && rng.random_bool(0.2) {
        t.phi3 = Fraction::new(s.l2_write_back, s.l2_lines_in);
    }
    (s, t)
}

fn boundary_cases() -> Result<usize, String> {
    let m = u64::MAX;
    let ev = |e: [u64; 6]| EventWindowSample::from_events(e, 1 << 20);
    let th = |p: [(u64, u64); 5]| Thresholds::from_array(p.map(|(n, d)| Fraction::new(n, d)));
    let base = th([(1, 2), (1, 4), (1, 5), (1, 2), (1, 100)]);
    // (sample, thresholds, which predicate sits exactly on its threshold)
    let cases = [
        (ev([100, 50, 90, 1, 100, 0]), base, 1),
        (ev([100, 90, 25, 1, 100, 0]), base, 2),
        (ev([100, 90, 90, 20, 100, 0]), base, 3),
        (ev([100, 90, 90, 1, 100, 50]), base, 4),
        (ev([100, 90, 90, 1, 100, 1]), base, 5),
        (
            ev([m, m - 1, m, 0, 1, 0]),
            th([(m - 1, m), (0, 1), (1, 1), (1, 1), (1, 1)]),
            1,
        ),
        (
            ev([m, 0, m - 2, 0, 1, 0]),
            th([(0, 1), (m - 2, m), (1, 1), (1, 1), (1, 1)]),
            2,
        ),
        (
            ev([1, 1, 1, m - 1, m, 0]),
            th([(0, 1), (0, 1), (m - 1, m), (1, 1), (1, 1)]),
            3,
        ),
        (
            ev([m, 0, 0, 0, 1, m - 3]),
            th([(0, 1), (0, 1), (1, 1), (m - 3, m), (1, 1)]),
            4,
        ),
        (
            ev([m, 0, 0, 0, 1, m - 3]),
            th([(0, 1), (0, 1), (1, 1), (1, 1), (m - 3, m)]),
            5,
        ),
    ];
    for (i, (s, t, which)) in cases.iter().enumerate() {
        let pv = evaluate_predicates(s, t);
        let got = [pv.p1, pv.p2, pv.p3, pv.p4, pv.p5][which - 1];
        ensure(!got, || {
            format!("boundary case {i}: P{which} true at equality")
        })?;
        ensure(pv == division_oracle(s, t), || {
            format!("boundary case {i}: oracle disagrees")
        })?;
    }
    Ok(cases.len())
}

fn predicate_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1);
    let n = 1_000_000;
    let mut suspicious = 0;
    for i in 0..n {
        let (s, t) = random_pair(&mut rng);
        let fast = evaluate_predicates(&s, &t);
        let slow = division_oracle(&s, &t);
        ensure(fast == slow, || format!("pair {i} disagrees: {s:?} {t:?}"))?;
        if fast.verdict() == Verdict::Suspicious {
            suspicious += 1;
        }
    }
    let boundaries = boundary_cases()?;
    let took = start.elapsed();
    ensure(took < Duration::from_secs(10), || format!("took {took:?}"))?;
    Ok(format!(
        "{n} pairs agree ({suspicious} suspicious), {boundaries} equality cases false, {:.2}s",
        took.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 2

fn scoring_latency_law() -> Outcome {
    let mut combos = 0;
    for gamma in 1..=100u32 {
        for alpha in 1..=5u32 {
            for beta in 1..=alpha {
                let cfg = ScoreConfig::new(alpha, beta, gamma);
                let mut st = ProcessMonitorState::new(0, 1 << 20);
                let mut raised_at = None;
                for w in 1..=200u32 {
                    let e = update_score(&mut st, Verdict::Suspicious, &cfg);
                    if e.kind == ScoreEventKind::SuspicionRaised {
                        raised_at = Some(w);
                        break;
                    }
                    ensure(!st.suspected, || "suspected without an event".into())?;
                }
                let expect = gamma.div_ceil(alpha);
                ensure(raised_at == Some(expect), || {
                    format!("gamma={gamma} alpha={alpha} beta={beta}: raised at {raised_at:?}, expected {expect}")
                })?;
                combos += 1;
            }
        }
    }
    Ok(format!(
        "{combos} (gamma, alpha, beta) combinations raise at ceil(gamma/alpha)"
    ))
}

// ---------------------------------------------------------------------------
// 3

fn random_means(rng: &mut ChaCha8Rng, tlb: (u64, u64)) -> [Fraction; 4] {
    let mut unit = || {
        let d = *[
            1u64, 2, 4, 5, 8, 10, 20, 25, 40, 50, 100, 125, 200, 250, 500, 1000,
        ]
        .choose(rng)
        .unwrap();
        Fraction::new(rng.random_range(0..=d), d)
    };
    let [a, b, c] = [unit(), unit(), unit()];
    let d = 10_000u64;
    let tlb = Fraction::new(rng.random_range(tlb.0 * d / 1000..=tlb.1 * d / 1000), d);
    [a, b, c, tlb]
}

fn mean_of(rows: &[[Fraction; 4]], m: usize) -> BigRational {
    let sum = rows
        .iter()
        .fold(BigRational::from_integer(big(0)), |acc, r| acc + fq(&r[m]));
    sum / BigInt::from(rows.len())
}

fn calibration_midpoint() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3);
    let corpora = 200;
    for k in 0..corpora {
        let mut gen = |n_lo: usize, tlb: (u64, u64)| {
            let n = rng.random_range(n_lo..6);
            (0..n)
                .map(|_| random_means(&mut rng, tlb))
                .collect::<Vec<_>>()
        };
        // tlb/l1 per mille ranges keep phi5 below phi4
        let benign = gen(1, (0, 10));
        let direct = gen(1, (0, 10));
        let indirect = gen(1, (500, 1000));
        let summaries = |rows: &[[Fraction; 4]], tag: &str| -> Vec<RunSummary> {
            rows.iter()
                .enumerate()
                .map(|(i, r)| RunSummary::from_means(format!("{tag}{i:02}"), *r))
                .collect()
        };
        let corpus = CalibrationCorpus {
            direct_attack_runs: summaries(&direct, "d"),
            indirect_attack_runs: summaries(&indirect, "i"),
            benign_runs: summaries(&benign, "b"),
        };
        let c = calibrate_thresholds(&corpus).map_err(|e| format!("corpus {k}: {e}"))?;
        let two = BigInt::from(2);
        let expect = [
            (mean_of(&direct, 0) + mean_of(&benign, 0)) / &two,
            (mean_of(&direct, 1) + mean_of(&benign, 1)) / &two,
            (mean_of(&direct, 2) + mean_of(&benign, 2)) / &two,
            (mean_of(&indirect, 3) + mean_of(&benign, 3)) / &two,
            (mean_of(&direct, 3) + mean_of(&benign, 3)) / &two,
        ];
        for (i, (phi, e)) in c.thresholds.as_array().iter().zip(&expect).enumerate() {
            ensure(fq(phi) == *e, || {
                format!("corpus {k}: phi{} = {phi}, expected {e}", i + 1)
            })?;
            ensure(c.audit[i].exact, || {
                format!("corpus {k}: phi{} narrowed", i + 1)
            })?;
        }
        // same corpus, runs in another order
        let mut shuffled = corpus.clone();
        shuffled.benign_runs.reverse();
        shuffled.direct_attack_runs.rotate_left(1);
        let again = calibrate_thresholds(&shuffled).map_err(|e| e.to_string())?;
        ensure(again == c, || {
            format!("corpus {k}: calibration depends on run order")
        })?;
        ensure(calibrate_thresholds(&corpus).unwrap() == c, || {
            "not deterministic".into()
        })?;
    }

    let cfg = seeded(1);
    let a = experiments::calibrate(&cfg, 1).map_err(|e| e.to_string())?;
    let b = experiments::calibrate(&cfg, 1).map_err(|e| e.to_string())?;
    ensure(
        a.calibration == b.calibration && a.bounds == b.bounds,
        || "preset calibration differs between runs".into(),
    )?;
    Ok(format!(
        "{corpora} synthetic corpora exact, preset calibration repeatable"
    ))
}

// ---------------------------------------------------------------------------
// 4

fn seeded(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed: Some(seed),
        ..ExperimentConfig::default()
    }
}

fn confusion_analogue() -> Outcome {
    let start = Instant::now();
    let seed = 1;
    let cfg = seeded(seed);
    let th = experiments::thresholds(&cfg, seed).map_err(|e| e.to_string())?;
    let corpus = experiments::evaluation_corpus(&cfg, seed).map_err(|e| e.to_string())?;
    let mut sizes = BTreeMap::new();
    for t in &corpus {
        *sizes.entry(t.label).or_insert(0) += 1;
    }
    ensure(
        sizes[&WorkloadLabel::Benign] == 60
            && sizes[&WorkloadLabel::DirectAttack] == 20
            && sizes[&WorkloadLabel::IndirectAttack] == 20,
        || format!("corpus sizes {sizes:?}"),
    )?;
    let rows = experiments::evaluate(&cfg, &corpus, th).map_err(|e| e.to_string())?;
    let gammas: Vec<u32> = rows.iter().map(|r| r.gamma.0).collect();
    ensure(gammas == [1, 10, 50, 100], || format!("gammas {gammas:?}"))?;
    let fp: Vec<usize> = rows.iter().map(|r| r.false_positives()).collect();
    let fn_: Vec<usize> = rows.iter().map(|r| r.false_negatives()).collect();
    ensure(fn_.iter().all(|&n| n == 0), || {
        format!("false negatives {fn_:?}")
    })?;
    ensure(fp.windows(2).all(|w| w[0] >= w[1]), || {
        format!("FP increases: {fp:?}")
    })?;
    ensure(fp[3] == 0, || format!("FP(100) = {}", fp[3]))?;
    let took = start.elapsed();
    ensure(took < Duration::from_secs(60), || format!("took {took:?}"))?;
    Ok(format!(
        "FP {fp:?}, FN {fn_:?} at gamma {gammas:?}, {:.1}s",
        took.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 5

fn leakage_analogue() -> Outcome {
    let seed = 1;
    let mut cfg = seeded(seed);
    cfg.gamma = parse_gamma_list("1,10,50,100,inf").unwrap();
    let th = experiments::thresholds(&cfg, seed).map_err(|e| e.to_string())?;
    let rows = experiments::leakage(&cfg, th, seed).map_err(|e| e.to_string())?;
    let mut by_rate: BTreeMap<u64, Vec<(Gamma, u32)>> = BTreeMap::new();
    for r in &rows {
        ensure(r.extracted <= 256, || format!("{r:?} above 256"))?;
        by_rate
            .entry(r.victim_delay_us)
            .or_default()
            .push((r.gamma, r.extracted));
    }
    let mut summary = Vec::new();
    for (rate, series) in &by_rate {
        let bytes: Vec<u32> = series.iter().map(|s| s.1).collect();
        ensure(bytes.windows(2).all(|w| w[0] <= w[1]), || {
            format!("delay {rate}us: not monotone {bytes:?}")
        })?;
        let at = |g: u32| series.iter().find(|s| s.0 == Gamma(g)).map(|s| s.1);
        ensure(at(1) < at(100), || format!("delay {rate}us: {bytes:?}"))?;
        ensure(at(Gamma::INF.0) == Some(256), || {
            format!("delay {rate}us: detector off {bytes:?}")
        })?;
        summary.push(format!("{rate}us {bytes:?}"));
    }
    Ok(summary.join(", "))
}

// ---------------------------------------------------------------------------
// 6

fn fork_propagation() -> Outcome {
    let sig = preset("flush_reload").unwrap().attack.unwrap().rates;
    let host = preset("steady_compute").unwrap().phases[0].rates;
    let w = 1 << 20;
    let mut records = Vec::new();
    for _ in 0..8 {
        records.push(TraceRecord::Delta {
            tid: 0,
            sample: scale_rates(&sig, w),
        });
    }
    for child in 1..=3 {
        records.push(TraceRecord::Fork { parent: 0, child });
        for _ in 0..4 {
            records.push(TraceRecord::Delta {
                tid: child,
                sample: scale_rates(&host, w),
            });
        }
        records.push(TraceRecord::Exit { tid: child });
    }
    records.push(TraceRecord::Delta {
        tid: 0,
        sample: scale_rates(&host, w),
    });
    records.push(TraceRecord::Exit { tid: 0 });
    let attacker = Trace {
        name: "forker".into(),
        label: WorkloadLabel::DirectAttack,
        records,
    };

    let cfg = seeded(1);
    let th = experiments::thresholds(&cfg, 1).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for pol in ["none", "te", "sc", "te+sc"] {
        let mut sc = Scenario::new(vec![attacker.clone()], th);
        sc.detector.score = ScoreConfig::new(1, 1, 4);
        sc.detector.window = WindowConfig::fixed(w);
        sc.policy = pol.parse().unwrap();
        let r = run_simulation(&sc).map_err(|e| e.to_string())?;
        let root = r.process(0).unwrap();
        ensure(root.ever_suspected, || {
            format!("{pol}: parent not suspected")
        })?;
        for child in r.processes.iter().filter(|p| p.parent == Some(0)) {
            ensure(
                child.initial.suspected && child.initial.windows_observed == 0,
                || format!("{pol}: child {} initial {:?}", child.pid, child.initial),
            )?;
            ensure(child.ever_suspected, || {
                format!("{pol}: child {} dropped", child.pid)
            })?;
            checked += 1;
        }
    }
    ensure(checked == 12, || format!("{checked} children"))?;
    Ok(format!(
        "{checked} children suspected at birth with zero windows"
    ))
}

// ---------------------------------------------------------------------------
// 7

fn rhu(n: u64, c: u64, total: u64) -> u64 {
    ((2 * n as u128 * c as u128 + total as u128) / (2 * total as u128)) as u64
}

fn window_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7);
    let sequences = 100_000;
    let mut boundaries = 0u64;
    let mut resizes = 0u64;
    for seq in 0..sequences {
        let lo = 1u64 << rng.random_range(4..10);
        let hi = lo << rng.random_range(0..5);
        let cfg = WindowConfig {
            w_min: lo,
            w_max: hi,
            ..WindowConfig::default()
        };
        let mut st = WindowState::new(lo << rng.random_range(0..=(hi / lo).trailing_zeros()));
        let mut fed = [0u64; 6];
        let mut out = [0u64; 6];
        let mut fed_cycles = 0;
        let mut out_cycles = 0;
        let mut last_width = st.width;
        for _ in 0..rng.random_range(1..12) {
            let cycles = rng.random_range(1..4 * hi);
            let scale = [1u64, 100, 10_000][rng.random_range(0..3)];
            let ev: [u64; 6] = core::array::from_fn(|_| rng.random_range(0..scale * cycles));
            let d = EventWindowSample::from_events(ev, cycles);
            let before = st;
            let bs = advance(&mut st, &d, &cfg).map_err(|e| e.to_string())?;

            // replay the split with the cumulative rounding rule
            let mut acc = before.accum;
            let mut offset = 0;
            let mut taken = [0u64; 6];
            ensure(
                bs.first().is_none_or(|b| b.width_used == before.width),
                || format!("seq {seq}: first window not at the current width"),
            )?;
            for b in &bs {
                let width = b.width_used;
                ensure((cfg.w_min..=cfg.w_max).contains(&width), || {
                    format!("seq {seq}: {width} out of bounds")
                })?;
                if width != last_width {
                    let a = last_width;
                    ensure(a == 2 * width || width == 2 * a, || {
                        format!("seq {seq}: {a} -> {width}")
                    })?;
                    resizes += 1;
                }
                last_width = width;

                let head = width - acc.elapsed_cycles;
                offset += head;
                let part: [u64; 6] = core::array::from_fn(|i| {
                    let cum = rhu(ev[i], offset, cycles);
                    let p = cum - taken[i];
                    taken[i] = cum;
                    p
                });
                let expect = acc
                    .checked_add(&EventWindowSample::from_events(part, head))
                    .unwrap();
                ensure(b.sample == expect, || {
                    format!("seq {seq}: split {:?} != {expect:?}", b.sample)
                })?;
                for (o, e) in out.iter_mut().zip(b.sample.events()) {
                    *o += e;
                }
                out_cycles += width;
                acc = EventWindowSample::ZERO;
                boundaries += 1;
            }
            let rest: [u64; 6] = core::array::from_fn(|i| ev[i] - taken[i]);
            let expect = acc
                .checked_add(&EventWindowSample::from_events(rest, cycles - offset))
                .unwrap();
            ensure(st.accum == expect, || format!("seq {seq}: carried sample"))?;
            for i in 0..6 {
                fed[i] += ev[i];
            }
            fed_cycles += cycles;
            ensure((cfg.w_min..=cfg.w_max).contains(&st.width), || {
                format!("seq {seq}: {} out of bounds", st.width)
            })?;
            let (a, z) = (last_width, st.width);
            ensure(a == z || a == 2 * z || z == 2 * a, || {
                format!("seq {seq}: {a} -> {z}")
            })?;
        }
        let carried = st.accum.events();
        for i in 0..6 {
            ensure(out[i] + carried[i] == fed[i], || {
                format!("seq {seq}: event {i} not conserved")
            })?;
        }
        ensure(out_cycles + st.accum.elapsed_cycles == fed_cycles, || {
            format!("seq {seq}: cycles")
        })?;
    }
    Ok(format!(
        "{sequences} sequences, {boundaries} boundaries, {resizes} resizes"
    ))
}

// ---------------------------------------------------------------------------
// 8

type Observed = Vec<(EventWindowSample, PredicateVector)>;

fn boundary_trace(r: &SimReport, pid: Pid) -> Observed {
    let mut out = Vec::new();
    let mut pending = None;
    for e in r.events_of(pid) {
        match e.kind {
            SimEventKind::WindowBoundary(b) => pending = Some(b.sample),
            SimEventKind::VerdictComputed {
                source: VerdictSource::Boundary,
                predicates,
                ..
            } => {
                out.push((
                    pending.take().expect("verdict follows its boundary"),
                    predicates,
                ));
            }
            _ => {}
        }
    }
    out
}

fn all_eval_presets() -> Vec<&'static str> {
    EVAL_BENIGN
        .iter()
        .chain(&EVAL_DIRECT)
        .chain(&EVAL_INDIRECT)
        .copied()
        .collect()
}

fn random_workloads(rng: &mut ChaCha8Rng, n: usize) -> Vec<Trace> {
    let names = all_eval_presets();
    (0..n)
        .map(|_| {
            let name = names.choose(rng).unwrap();
            let horizon = 1 << rng.random_range(24..27);
            let t = generate(&preset(name).unwrap(), rng.random(), horizon)
                .unwrap()
                .0;
            apply_noise(&t, &NoiseCoefficients::default(), rng.random()).unwrap()
        })
        .collect()
}

fn random_machine(rng: &mut ChaCha8Rng, sc: &mut Scenario) {
    let cores = [1usize, 2, 4, 8][rng.random_range(0..4)];
    let per = if cores == 1 {
        1
    } else {
        [1, 2][rng.random_range(0..2)]
    };
    sc.topology = MachineTopology::uniform(cores, per).unwrap();
    sc.quantum = 1 << rng.random_range(17..23);
}

fn isolation_property() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x8);
    let th = experiments::thresholds(&seeded(1), 1).map_err(|e| e.to_string())?;
    let mut procs = 0;
    for k in 0..20 {
        let n = rng.random_range(2..7);
        let workloads = random_workloads(&mut rng, n);
        let gamma = rng.random_range(1..60);
        let mut sc = Scenario::new(workloads.clone(), th);
        sc.detector.score = ScoreConfig::new(1, 1, gamma);
        random_machine(&mut rng, &mut sc);
        let together = run_simulation(&sc).map_err(|e| e.to_string())?;
        for (w, t) in workloads.into_iter().enumerate() {
            let mut solo_sc = sc.clone();
            solo_sc.workloads = vec![t];
            solo_sc.policy = MitigationPolicy::none();
            let solo = run_simulation(&solo_sc).map_err(|e| e.to_string())?;
            let by_tid: BTreeMap<_, _> = solo.processes.iter().map(|p| (p.tid, p)).collect();
            for p in together.processes.iter().filter(|p| p.workload == w) {
                let s = by_tid[&p.tid];
                ensure(p.cycles_run == s.cycles_run, || {
                    format!("scenario {k} workload {w} tid {}: cycles differ", p.tid)
                })?;
                ensure(
                    boundary_trace(&together, p.pid) == boundary_trace(&solo, s.pid),
                    || {
                        format!(
                            "scenario {k} workload {w} tid {}: boundary sequence differs",
                            p.tid
                        )
                    },
                )?;
                procs += 1;
            }
        }
    }
    Ok(format!(
        "20 scenarios, {procs} processes match their solo runs"
    ))
}

// ---------------------------------------------------------------------------
// 9

fn zero_overhead() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9);
    let th = experiments::thresholds(&seeded(1), 1).map_err(|e| e.to_string())?;
    let mut clean = 0;
    for k in 0..30 {
        let n = rng.random_range(1..7);
        let (workloads, gamma) = if k % 2 == 0 {
            (random_workloads(&mut rng, n), ScoreConfig::GAMMA_DISABLED)
        } else {
            let benign: Vec<Trace> = (0..n)
                .map(|_| {
                    let name = EVAL_BENIGN.choose(&mut rng).unwrap();
                    let t = generate(&preset(name).unwrap(), rng.random(), 1 << 26)
                        .unwrap()
                        .0;
                    apply_noise(&t, &NoiseCoefficients::default(), rng.random()).unwrap()
                })
                .collect();
            (benign, rng.random_range(10..101))
        };
        let mut sc = Scenario::new(workloads, th);
        sc.detector.score = ScoreConfig::new(1, 1, gamma);
        sc.policy = MitigationPolicy::default();
        random_machine(&mut rng, &mut sc);
        let r = run_simulation(&sc).map_err(|e| e.to_string())?;
        if r.processes.iter().any(|p| p.ever_suspected) {
            continue;
        }
        ensure(r.ledger.is_zero(), || {
            format!("scenario {k}: ledger {:?}", r.ledger.totals)
        })?;
        ensure(
            !r.events
                .iter()
                .any(|e| matches!(e.kind, SimEventKind::MitigationApplied(_))),
            || format!("scenario {k}: mitigation without a suspect"),
        )?;
        clean += 1;
    }
    ensure(clean >= 15, || {
        format!("only {clean} suspect-free scenarios")
    })?;
    Ok(format!("{clean} suspect-free scenarios, all ledgers zero"))
}

// ---------------------------------------------------------------------------
// 10

fn trace_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x10);
    let names = preset_names();
    let mut with_forks = 0;
    for k in 0..100 {
        // every fourth trace forks
        let name = if k % 4 == 0 {
            "fork_heavy"
        } else {
            names.choose(&mut rng).unwrap()
        };
        let horizon = rng.random_range(1 << 22..1 << 26);
        let mut t = generate(&preset(name).unwrap(), rng.random(), horizon)
            .unwrap()
            .0;
        if rng.random_bool(0.5) {
            t = apply_noise(&t, &NoiseCoefficients::default(), rng.random()).unwrap();
        }
        let mut buf = Vec::new();
        write_trace(&t, &mut buf).map_err(|e| e.to_string())?;
        let back = read_trace(buf.as_slice()).map_err(|e| format!("trace {k}: {e}"))?;
        ensure(back == t, || format!("trace {k} ({name}) changed"))?;
        if t.fork_count() > 0 {
            ensure(
                t.records
                    .iter()
                    .filter(|r| matches!(r, TraceRecord::Exit { .. }))
                    .count()
                    > 1,
                || format!("trace {k}: children never exit"),
            )?;
            with_forks += 1;
        }
    }
    ensure(with_forks >= 25, || {
        format!("only {with_forks} traces fork")
    })?;
    Ok(format!(
        "100 traces round-trip, {with_forks} with fork/exit records"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("predicate oracle equivalence", predicate_oracle_equivalence),
        ("scoring latency law", scoring_latency_law),
        ("calibration midpoint", calibration_midpoint),
        ("confusion matrix analogue", confusion_analogue),
        ("leakage before detection analogue", leakage_analogue),
        ("fork propagation", fork_propagation),
        ("window safety fuzz", window_fuzz),
        ("isolation property", isolation_property),
        ("zero-suspect zero-overhead", zero_overhead),
        ("trace round-trip", trace_round_trip),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "{}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
