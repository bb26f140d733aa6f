//! Acceptance suite: one verdict line per criterion.
//!
//! Run with `cargo test -p tidemem-harness --test acceptance`. Verdicts are
//! printed as `[AC-n] PASS|FAIL ...`. A FAIL verdict is reported, not
//! raised, unless `TIDEMEM_ACCEPTANCE_STRICT=1` is set; errors while running
//! a criterion always abort.

use std::io::Write as _;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tidemem_core::config::{RetrievalParams, UtilityParams};
use tidemem_core::hierarchy::{Hierarchy, Level, NewNode, NodeId};
use tidemem_core::retrieval::search_readonly;
use tidemem_core::types::contains_token_sequence;
use tidemem_core::{utility, Embedding, Engine, EngineConfig, StreamEvent};
use tidemem_harness::baseline::run_baseline;
use tidemem_harness::bench::{batch_means, update_latencies, BenchOptions};
use tidemem_harness::metrics::{deciles, SlopeTest};
use tidemem_harness::oracle::Item;
use tidemem_harness::regret::{compare, GREEDY_BOUND};
use tidemem_harness::{generate, load_stream, replay, write_outputs, ReplayOptions, SynthConfig};

type Verdict = anyhow::Result<(bool, String)>;
type Criterion = (&'static str, &'static str, fn() -> Verdict);

fn synth(seed: u64, turns: u64) -> SynthConfig {
    SynthConfig {
        seed,
        turns,
        ..SynthConfig::default()
    }
}

fn config(t_max: u64) -> EngineConfig {
    let mut cfg = EngineConfig::default();
    cfg.params.t_max = t_max;
    cfg
}

/// Budget invariant over 300 randomized replays.
fn ac1() -> Verdict {
    let started = Instant::now();
    let (mut replays, mut steps, mut violations) = (0, 0usize, 0usize);
    for seed in 1..=100 {
        let s = generate(&SynthConfig {
            probe_rate: 0.05,
            ..synth(seed, 1000)
        });
        for t_max in [50, 200, 1000] {
            let out = replay(&s.events, config(t_max), ReplayOptions::default())?;
            replays += 1;
            steps += out.turns.len();
            violations += out.report.aggregates.budget_violations;
            out.engine.hierarchy().check_integrity()?;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    Ok((
        violations == 0 && secs < 120.0,
        format!(
            "{replays} replays, {steps} steps, {violations} violations, {secs:.1}s (limit 120s)"
        ),
    ))
}

/// Least-squares exponent of cumulative time against turn on a log-log scale.
fn growth_exponent(samples: &[(u64, f64)]) -> f64 {
    let mut total = 0.0;
    let mut points = Vec::new();
    for (i, &(t, v)) in samples.iter().enumerate() {
        total += v;
        if (i + 1) % (samples.len() / 20).max(1) == 0 {
            points.push(((t as f64).ln(), total.ln()));
        }
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Bounded update latency on a 10,000-turn replay, with the naive
/// baseline as contrast.
fn ac2() -> Verdict {
    let s = generate(&synth(1, 10_000));
    let cfg = config(1000);
    let opts = BenchOptions {
        chunk_len: 250,
        rounds: 5,
        ..BenchOptions::default()
    };
    let lat = update_latencies(&s.events, &cfg, opts)?;
    let d = deciles(&lat);
    let ratio = d[9].latency.mean / d[0].latency.mean;

    let full_slope = SlopeTest::fit(&batch_means(&lat, opts.chunk_len));

    // Diagnostic only: deterministic work per turn and the slope after the
    // second decile, where work has levelled off.
    let out = replay(&s.events, cfg.clone(), ReplayOptions::default())?;
    let tenth = out.turns.len() / 10;
    let work: Vec<f64> = out
        .turns
        .chunks(tenth)
        .take(10)
        .map(|c| c.iter().map(|r| r.work as f64).sum::<f64>() / c.len() as f64)
        .collect();
    let late_from = d[2].first_turn;
    let late: Vec<(u64, f64)> = lat.iter().copied().filter(|x| x.0 >= late_from).collect();
    let late_slope = SlopeTest::fit(&batch_means(&late, opts.chunk_len));

    let base = run_baseline(&s.events);
    let bd = deciles(&base);
    let base_ratio = bd[9].latency.mean / bd[0].latency.mean;
    let base_slope = SlopeTest::fit(&batch_means(&base, opts.chunk_len));
    let exponent = growth_exponent(&base);
    let engine_exponent = growth_exponent(&lat);

    let pass = ratio <= 1.5
        && !full_slope.significantly_positive(0.05)
        && base_slope.significantly_positive(0.05)
        && exponent > 1.5;
    Ok((
        pass,
        format!(
            "engine: decile ratio {ratio:.3} (<= 1.5), first/last decile {:.4}/{:.4} ms, slope {:.3e} ms/turn p={:.4} (>= 0.05, {}-turn batch means); \
             work/turn by decile {:.0?}, slope from turn {late_from} p={:.3}, cumulative exponent {engine_exponent:.2}; \
             naive baseline: decile ratio {base_ratio:.1}, slope p={:.1e}, cumulative exponent {exponent:.2} (> 1.5)",
            d[0].latency.mean,
            d[9].latency.mean,
            full_slope.slope,
            full_slope.p_value,
            opts.chunk_len,
            work,
            late_slope.p_value,
            base_slope.p_value
        ),
    ))
}

/// Engine eviction against the exact optimum on random small instances.
fn ac3() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut ok, mut min_ratio, mut binding) = (0usize, f64::INFINITY, 0usize);
    let mut below = Vec::new();
    for i in 0..1000 {
        let capacity = rng.random_range(8..=120u64);
        let n = rng.random_range(1..=15usize);
        let items: Vec<Item> = (0..n)
            .map(|_| {
                Item::new(
                    rng.random_range(0.01..10.0),
                    rng.random_range(1..=capacity / 4),
                )
            })
            .collect();
        if items.iter().map(|x| x.cost).sum::<u64>() > capacity {
            binding += 1;
        }
        let r = compare(&items, capacity)?;
        min_ratio = min_ratio.min(r.ratio);
        if r.below_bound {
            below.push(format!(
                "instance {i}: capacity {capacity}, items {items:?}, ratio {:.4}",
                r.ratio
            ));
        } else {
            ok += 1;
        }
    }
    for line in &below {
        println!("  sub-threshold {line}");
    }
    let share = ok as f64 / 1000.0;
    let secs = started.elapsed().as_secs_f64();
    Ok((
        share >= 0.99 && secs < 60.0,
        format!(
            "{ok}/1000 instances at or above {GREEDY_BOUND:.4} ({binding} over capacity), min ratio {min_ratio:.4}, {secs:.1}s (limit 60s)"
        ),
    ))
}

/// Utility values and monotonicity.
fn ac4() -> Verdict {
    let p = UtilityParams::default();
    let base = utility(0, 0, 0, &p);
    let tau = p.tau as u64;
    // alpha*ln(2) + beta/e evaluated with mpmath at 50 digits.
    let reference: f64 = "0.5630400848045441142885".parse()?;
    let one = utility(1, 0, tau, &p);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    for _ in 0..10_000 {
        let f = rng.random_range(0..10_000u64);
        let df = rng.random_range(0..1000u64);
        let dt = rng.random_range(0..50_000u64);
        let ddt = rng.random_range(0..5_000u64);
        let now = 100_000;
        // (f + df, dt) dominates (f, dt + ddt).
        let better = utility(f + df, now - dt, now, &p);
        let worse = utility(f, now - dt - ddt, now, &p);
        if better < worse {
            violations += 1;
        }
    }
    let pass = base == p.beta && (one - reference).abs() <= 1e-12 && violations == 0;
    Ok((
        pass,
        format!(
            "u(0,0) = {base} (beta {}), u(1,tau) = {one:.16} (|diff| {:.1e} <= 1e-12), {violations} violations in 10000 dominance pairs",
            p.beta,
            (one - reference).abs()
        ),
    ))
}

/// Unit vector with cosine `c` to axis 0, rotated towards `axis`.
fn at_cos(c: f64, axis: usize, dim: usize) -> Embedding {
    let mut v = vec![0.0; dim];
    v[0] = c;
    v[axis] = (1.0 - c * c).sqrt();
    Embedding::normalized(v).expect("non-zero")
}

/// Retrieval contract on a constructed 8 x 12 hierarchy.
fn ac5() -> Verdict {
    let p = UtilityParams::default();
    let rp = RetrievalParams::default();
    let now = 1000u64;
    let (scenes, events, amus) = (8usize, 12usize, 6usize);
    let dim = 4 + scenes + scenes * events + scenes * events * amus;
    let mut h = Hierarchy::new(1_000_000);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut axis = 1;
    let mut next_axis = || {
        axis += 1;
        axis - 1
    };

    // (amu id, scene rank, event rank, cosine, freq, last_touch)
    let mut table = Vec::new();
    let mut event_ids = Vec::new();
    for s in 0..scenes {
        let scene_cos = 0.9 - 0.1 * s as f64;
        let sid = h.insert_node(
            NewNode::new(
                Level::Scene,
                format!("scene {s}"),
                at_cos(scene_cos, next_axis(), dim),
                now,
            ),
            None,
        )?;
        for e in 0..events {
            let event_cos = 0.95 - 0.05 * e as f64;
            let eid = h.insert_node(
                NewNode::new(
                    Level::Event,
                    format!("event {s}.{e}"),
                    at_cos(event_cos, next_axis(), dim),
                    now,
                ),
                Some(sid),
            )?;
            event_ids.push(eid);
            for a in 0..amus {
                let cos = rng.random_range(0.3..0.99);
                let freq = rng.random_range(0..40u64);
                let last = now - rng.random_range(0..2000u64).min(now);
                let mut node = NewNode::new(
                    Level::Amu,
                    format!("amu {s}.{e}.{a}"),
                    at_cos(cos, next_axis(), dim),
                    last,
                );
                node.freq = freq;
                let id = h.insert_node(node, Some(eid))?;
                table.push((id, s, e, cos, freq, last));
            }
        }
    }

    // Decoys with the highest raw scores: outside the scene beam, outside
    // the event beam, and below the cosine floor.
    for (s, e, cos) in [(6, 0, 0.99), (0, 11, 0.99), (0, 0, 0.49)] {
        let mut node = NewNode::new(
            Level::Amu,
            format!("decoy {s}.{e}"),
            at_cos(cos, next_axis(), dim),
            now,
        );
        node.freq = 5000;
        let id = h.insert_node(node, Some(event_ids[s * events + e]))?;
        table.push((id, s, e, cos, 5000, now));
    }

    // Independent expectation: beam over scene/event rank, cosine filter,
    // then S = cos * (alpha ln(f+1) + beta exp(-dt/tau)) descending.
    let mut expected: Vec<(f64, f64, NodeId)> = table
        .iter()
        .filter(|(_, s, e, cos, _, _)| *s < rp.k_scene && *e < rp.k_event && *cos >= rp.min_sim)
        .map(|&(id, _, _, cos, f, last)| {
            let u = 0.6 * ((f + 1) as f64).ln() + 0.4 * (-((now - last) as f64) / 500.0).exp();
            (cos * u, cos, id)
        })
        .collect();
    expected.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(b.1.total_cmp(&a.1))
            .then(a.2.cmp(&b.2))
    });
    let expected_ids: Vec<NodeId> = expected.iter().take(rp.k_amu).map(|x| x.2).collect();
    let decoy_best = table
        .iter()
        .map(|&(id, _, _, cos, f, last)| (cos * utility(f, last, now, &p), id))
        .filter(|x| x.0 > 0.0)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|x| x.1);

    let query = at_cos(1.0, 1, dim);
    let paths = search_readonly(&h, &query, now, &p, &rp)?;
    let got: Vec<NodeId> = paths.iter().map(|x| x.amu_id).collect();
    let scenes_hit: std::collections::BTreeSet<NodeId> = paths.iter().map(|x| x.scene_id).collect();
    let min_cos = paths.iter().map(|x| x.cosine).fold(f64::INFINITY, f64::min);
    let scores_match = paths
        .iter()
        .zip(&expected)
        .all(|(x, e)| (x.score - e.0).abs() <= 1e-12);
    let pass = paths.len() <= 3
        && min_cos >= 0.5
        && scenes_hit.len() <= 5
        && got == expected_ids
        && scores_match
        && decoy_best.is_some_and(|d| !got.contains(&d));
    Ok((
        pass,
        format!(
            "{} paths, min cosine {min_cos:.3}, {} scene(s); order {:?} vs oracle {:?}; highest raw score {:?} excluded",
            paths.len(),
            scenes_hit.len(),
            got.iter().map(|x| x.0).collect::<Vec<_>>(),
            expected_ids.iter().map(|x| x.0).collect::<Vec<_>>(),
            decoy_best.map(|x| x.0)
        ),
    ))
}

fn entity_present(engine: &Engine, name: &str) -> bool {
    let st = engine.state();
    st.hierarchy
        .nodes()
        .any(|n| contains_token_sequence(&n.label, name))
        || st
            .buffer
            .visible()
            .any(|e| contains_token_sequence(&e.utterance.text, name))
        || st
            .pending
            .iter()
            .any(|p| contains_token_sequence(&p.summary(), name))
}

#[derive(Default)]
struct Tally {
    hits: usize,
    total: usize,
}

impl Tally {
    fn add(&mut self, hit: bool) {
        self.hits += usize::from(hit);
        self.total += 1;
    }
    fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }
}

impl std::fmt::Display for Tally {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{} = {:.3}", self.hits, self.total, self.rate())
    }
}

/// Planted-entity recall with room to spare and under a 25% budget.
fn ac6() -> Verdict {
    let (mut roomy, mut roomy_wide) = (Tally::default(), Tally::default());
    let (mut frequent, mut single) = (Tally::default(), Tally::default());
    for seed in 1..=50 {
        let s = generate(&SynthConfig {
            probe_rate: 0.05,
            ..synth(seed, 500)
        });
        let mut sizing = Engine::new(config(u64::MAX / 4))?;
        for ev in &s.events {
            sizing.on_event(ev)?;
        }
        sizing.finish()?;
        let content = sizing.hierarchy().total_cost();

        let mut wide = config(content);
        wide.retrieval.k_scene = usize::MAX;
        wide.retrieval.k_event = usize::MAX;
        for (cfg, pressure) in [
            (config(content), false),
            (wide, false),
            (config(content / 4), true),
        ] {
            let wide_beam = cfg.retrieval.k_scene == usize::MAX;
            let mut engine = Engine::new(cfg)?;
            let mut probes = s.probes.iter();
            for ev in &s.events {
                let present = match ev {
                    StreamEvent::Probe(p) => entity_present(&engine, &p.keywords[0]),
                    StreamEvent::Utterance(_) => false,
                };
                let out = engine.on_event(ev)?;
                let (StreamEvent::Probe(p), Some(a)) = (ev, out.answer) else {
                    continue;
                };
                let meta = probes.next().expect("probe metadata");
                let hit = contains_token_sequence(&a.context.text(), &p.keywords[0]);
                if pressure {
                    match meta.prior_mentions {
                        1 => single.add(hit),
                        n if n >= 3 => frequent.add(hit),
                        _ => {}
                    }
                } else if present {
                    if wide_beam {
                        roomy_wide.add(hit);
                    } else {
                        roomy.add(hit);
                    }
                }
            }
        }
    }
    let pass = roomy.hits == roomy.total && frequent.rate() > single.rate();
    Ok((
        pass,
        format!(
            "no pressure: recall {roomy} (required 1.0; with unbounded scene/event beam {roomy_wide}); \
             25% budget: frequent (>=3 mentions) {frequent} vs single-mention {single} (frequent must be higher)"
        ),
    ))
}

/// Byte-reproducible runs and snapshot/restore equivalence.
fn ac7() -> Verdict {
    let s = generate(&SynthConfig {
        probe_rate: 0.05,
        ..synth(1, 1500)
    });
    let run = || -> anyhow::Result<(String, String, String)> {
        let mut cfg = config(200);
        cfg.audit = true;
        let out = replay(&s.events, cfg, ReplayOptions::default())?;
        Ok((
            serde_json::to_string(&out.report.without_timing())?,
            serde_json::to_string(&out.audit)?,
            out.engine.snapshot()?,
        ))
    };
    let reproducible = run()? == run()?;
    let stream_a = serde_json::to_string(&generate(&synth(9, 300)).events)?;
    let stream_b = serde_json::to_string(&generate(&synth(9, 300)).events)?;

    let (head, tail) = s.events.split_at(900);
    let mut straight = Engine::new(config(200))?;
    for ev in head {
        straight.on_event(ev)?;
    }
    let mut restored = Engine::restore_default(&straight.snapshot()?)?;
    let mut same = true;
    for ev in tail {
        let a = straight.on_event(ev)?;
        let b = restored.on_event(ev)?;
        same &= a.answer.map(|x| (x.text, x.context)) == b.answer.map(|x| (x.text, x.context));
        same &= a.step == b.step;
    }
    same &= straight.snapshot()? == restored.snapshot()?;
    Ok((
        reproducible && same && stream_a == stream_b,
        format!(
            "repeat run identical: {reproducible}; synthetic stream identical: {}; restore at turn 900 matches uninterrupted run: {same}",
            stream_a == stream_b
        ),
    ))
}

/// Look-ahead probes are rejected with the offending line number.
fn ac8() -> Verdict {
    let dir = tempfile::tempdir()?;
    let cases = [
        (
            r#"{"type":"probe","turn":3,"question":"who?","evidence_turns":[1,3]}"#,
            "equal",
        ),
        (
            r#"{"type":"probe","turn":3,"question":"who?","evidence_turns":[7]}"#,
            "future",
        ),
    ];
    let mut notes = Vec::new();
    let mut pass = true;
    for (i, (probe, label)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{i}.jsonl"));
        let mut f = std::fs::File::create(&path)?;
        writeln!(
            f,
            r#"{{"type":"utterance","turn":1,"speaker":"A","text":"hello there"}}"#
        )?;
        writeln!(f)?;
        writeln!(f, "{probe}")?;
        drop(f);
        let err = load_stream(&path).err();
        let lib_ok = err
            .as_ref()
            .is_some_and(|e| e.line() == Some(3) && e.to_string().contains("look-ahead"));
        let cli = Command::new(env!("CARGO_BIN_EXE_tidemem"))
            .arg("replay")
            .arg(&path)
            .arg("--out")
            .arg(dir.path().join("out"))
            .output()?;
        let stderr = String::from_utf8_lossy(&cli.stderr);
        let cli_ok = !cli.status.success() && stderr.contains("line 3: look-ahead violation");
        pass &= lib_ok && cli_ok;
        notes.push(format!("{label} evidence turn -> {}", stderr.trim()));
    }
    // A clean stream replays.
    let good = dir.path().join("good.jsonl");
    std::fs::write(
        &good,
        concat!(
            r#"{"type":"utterance","turn":1,"speaker":"A","text":"hello there"}"#,
            "\n",
            r#"{"type":"probe","turn":2,"question":"who?","evidence_turns":[1]}"#,
            "\n"
        ),
    )?;
    let events = load_stream(&good)?;
    let out = replay(&events, EngineConfig::default(), ReplayOptions::default())?;
    write_outputs(&dir.path().join("good"), &out)?;
    pass &= out.report.probes.len() == 1;
    Ok((pass, notes.join("; ")))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("AC-1", "budget invariant", ac1),
        ("AC-2", "bounded update latency", ac2),
        ("AC-3", "greedy vs oracle", ac3),
        ("AC-4", "utility correctness", ac4),
        ("AC-5", "retrieval contract", ac5),
        ("AC-6", "information preservation", ac6),
        ("AC-7", "determinism and restart", ac7),
        ("AC-8", "no-look-ahead audit", ac8),
    ];
    let strict = std::env::var("TIDEMEM_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        let started = Instant::now();
        match f() {
            Ok((pass, detail)) => {
                println!(
                    "[{id}] {} {name}: {detail} [{:.1}s]",
                    if pass { "PASS" } else { "FAIL" },
                    started.elapsed().as_secs_f64()
                );
                if !pass {
                    failed.push(id);
                }
            }
            Err(e) => {
                println!("[{id}] ERROR {name}: {e:#}");
                std::process::exit(2);
            }
        }
    }
    println!(
        "acceptance: {}/8 criteria passed{}",
        8 - failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed: {}", failed.join(", "))
        }
    );
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
