//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail.

use std::collections::{BTreeMap, VecDeque};
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tiersim::energy::{
    battery_life_bound, cycle_duration, cycle_energy, energy_savings_percent, EnergyTable,
};
use tiersim::heuristics::{cloud_heuristic, gateway_heuristic, sensor_heuristic, update_history};
use tiersim::oracle::TierAccuracyProfile;
use tiersim::run::run_scenario;
use tiersim::sim::{TraceKind, TraceRecord};
use tiersim::{
    seed, AnomalyTracker, BatteryState, ConditionClass, Energy, HeuristicParams, InferenceMode,
    NodeId, Scenario, SimTime,
};

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, id: &str, ok: bool, detail: String) {
        println!("{} {id}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failures += 1;
        }
    }

    fn timed(&mut self, id: &str, elapsed: Duration, limit: Duration) {
        self.check(
            id,
            elapsed < limit,
            format!("{:.3} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs()),
        );
    }
}

fn sleep_30s() -> SimTime {
    SimTime::from_millis(30_000)
}

fn battery_bounds(r: &mut Report) {
    let start = Instant::now();
    let table = EnergyTable::default();
    let battery = BatteryState::default();
    let s = battery_life_bound(&battery, InferenceMode::S, sleep_30s(), &table);
    let c = battery_life_bound(&battery, InferenceMode::C, sleep_30s(), &table);
    let analytic = start.elapsed();
    r.check("1a battery bound S", (s - 104.0).abs() <= 2.0, format!("{s:.3} h (104 ± 2)"));
    r.check("1b battery bound C", (c - 65.0).abs() <= 2.0, format!("{c:.3} h (65 ± 2)"));
    r.timed("1c analytic runtime", analytic, Duration::from_secs(1));

    let start = Instant::now();
    let scenario = Scenario::preset("paper-battery-bounds").unwrap();
    let run = run_scenario(&scenario, None).unwrap();
    let simulated = start.elapsed();
    for (node, mode, bound) in [(0, InferenceMode::S, s), (1, InferenceMode::C, c)] {
        let n = &run.summary.nodes[node];
        let life = n.projected_life_h.unwrap_or(0.0);
        // death lands inside the cycle that exhausts the battery
        let cycle_h = cycle_duration(mode, sleep_30s(), &table).as_hours_f64();
        let ok = n.dead && n.final_mode == Some(mode) && (life - bound).abs() <= cycle_h;
        r.check(
            &format!("1{} simulated life {mode}", if node == 0 { 'd' } else { 'e' }),
            ok && (life - if node == 0 { 104.0 } else { 65.0 }).abs() <= 2.0,
            format!("{life:.3} h, closed form {bound:.3} h, dead={}", n.dead),
        );
    }
    r.timed("1f simulated runtime", simulated, Duration::from_secs(10));
}

fn savings(r: &mut Report) {
    let t = EnergyTable::default();
    let on = cycle_energy(InferenceMode::S, sleep_30s(), &t).as_millijoules();
    let off = cycle_energy(InferenceMode::G, sleep_30s(), &t).as_millijoules();
    let pct = energy_savings_percent(on, off).unwrap();
    r.check("2 energy savings", (pct - 44.0).abs() <= 0.5, format!("{pct:.4}% (44.0 ± 0.5)"));
}

fn cycle_arithmetic(r: &mut Report) {
    let t = EnergyTable::default();
    let s_e = cycle_energy(InferenceMode::S, sleep_30s(), &t);
    let s_d = cycle_duration(InferenceMode::S, sleep_30s(), &t);
    r.check(
        "3a S cycle",
        s_e == Energy::from_nanojoules(2_003_830_000) && s_d == SimTime::from_millis(40_014),
        format!("{s_e} mJ over {s_d} ms (exactly 2003.83 / 40014)"),
    );
    for (id, mode) in [("3b G cycle", InferenceMode::G), ("3c C cycle", InferenceMode::C)] {
        let e = cycle_energy(mode, sleep_30s(), &t);
        let d = cycle_duration(mode, sleep_30s(), &t);
        r.check(
            id,
            (e.as_millijoules() - 3_581.78).abs() <= 2.0 && d == SimTime::from_millis(44_750),
            format!("{e} mJ over {d} ms (3581.78 ± 2 / exactly 44750)"),
        );
    }
}

fn latency(r: &mut Report) {
    let start = Instant::now();
    let targets = [3.33, 148.15, 641.71];
    let preset = Scenario::preset("paper-latency").unwrap();
    let run = run_scenario(&preset, None).unwrap();
    for m in InferenceMode::ALL {
        let l = run.summary.latency[&m];
        r.check(
            &format!("4a latency {m} zero jitter"),
            l.count > 0 && l.mean_ms == targets[m.index()],
            format!("{} samples, mean {} ms (exactly {})", l.count, l.mean_ms, targets[m.index()]),
        );
    }
    let mut pooled = [(0u64, 0u128); 3];
    for seed in 0..10 {
        let mut s = preset.clone();
        s.seed = seed;
        s.latency = s.latency.with_relative_jitter(0.1);
        for x in run_scenario(&s, None).unwrap().output.latencies {
            pooled[x.mode.index()].0 += 1;
            pooled[x.mode.index()].1 += x.latency.as_micros() as u128;
        }
    }
    for m in InferenceMode::ALL {
        let (n, sum) = pooled[m.index()];
        let mean = sum as f64 / n.max(1) as f64 / 1_000.0;
        let target = targets[m.index()];
        let off = (mean - target).abs() / target;
        r.check(
            &format!("4b latency {m} 10% jitter"),
            n > 0 && off <= 0.03,
            format!("{n} samples over 10 seeds, mean {mean:.3} ms ({:.2}% off, limit 3%)", off * 100.0),
        );
    }
    r.timed("4c latency runtime", start.elapsed(), Duration::from_secs(5));
}

fn ref_sensor(sigma: u32, tau: u32, h: u32, b: f64, p: &HeuristicParams) -> InferenceMode {
    if b < p.low_battery_pct {
        return InferenceMode::S;
    }
    if tau < h {
        return InferenceMode::S;
    }
    if sigma >= p.sensor_escalation {
        return InferenceMode::G;
    }
    InferenceMode::S
}

fn ref_gateway(sigma: u32, tau: u32, h: u32, b: f64, q: u32, p: &HeuristicParams) -> InferenceMode {
    if b < p.low_battery_pct {
        return InferenceMode::S;
    }
    if tau < h {
        return InferenceMode::G;
    }
    if sigma < p.gateway_deescalation {
        return InferenceMode::S;
    }
    if p.gateway_deescalation <= sigma && sigma < p.gateway_escalation && q < p.queue_threshold {
        return InferenceMode::G;
    }
    InferenceMode::C
}

fn ref_cloud(sigma: u32, tau: u32, h: u32, b: f64, p: &HeuristicParams) -> InferenceMode {
    if b < p.low_battery_pct {
        return InferenceMode::S;
    }
    if tau < h {
        return InferenceMode::C;
    }
    if sigma < p.cloud_deescalation {
        return InferenceMode::G;
    }
    InferenceMode::C
}

fn random_params(rng: &mut ChaCha8Rng) -> HeuristicParams {
    let sensor_depth = rng.random_range(1..=64);
    let gateway_depth = rng.random_range(2..=64);
    let cloud_depth = rng.random_range(1..=64);
    let gateway_escalation = rng.random_range(2..=gateway_depth);
    HeuristicParams {
        low_battery_pct: rng.random_range(1.0..99.0),
        sensor_escalation: rng.random_range(1..=sensor_depth),
        gateway_deescalation: rng.random_range(1..gateway_escalation),
        gateway_escalation,
        queue_threshold: rng.random_range(1..=10),
        cloud_deescalation: rng.random_range(1..=cloud_depth),
        cloud_escalation: rng.random_range(1..=64),
        sensor_depth,
        gateway_depth,
        cloud_depth,
    }
}

fn heuristic_oracle(r: &mut Report) {
    let start = Instant::now();
    let mut rng = seed::stream(5, "acceptance-heuristics", 0);
    let draws = 1_000_000;
    let mut sigma_mismatch = 0u64;
    let mut verdict_mismatch = 0u64;
    for _ in 0..draws {
        let p = random_params(&mut rng);
        let tier = InferenceMode::ALL[rng.random_range(0..3)];
        let h = p.depth(tier);
        let mut tracker = AnomalyTracker::new(h).unwrap();
        let mut list: VecDeque<bool> = VecDeque::new();
        let steps = rng.random_range(0..(2 * h + 8));
        let anomaly_rate: f64 = rng.random();
        for _ in 0..steps {
            let bit = rng.random_bool(anomaly_rate);
            let same_mode = rng.random_range(0..40) != 0;
            tracker = update_history(tracker, bit, same_mode);
            if same_mode {
                list.push_front(bit);
                list.truncate(h as usize);
            } else {
                list.clear();
            }
        }
        let sigma = list.iter().filter(|b| **b).count() as u32;
        let tau = list.len() as u32;
        if tracker.anomaly_count() != sigma || tracker.len() != tau {
            sigma_mismatch += 1;
        }
        let b: f64 = rng.random_range(0.0..=100.0);
        let q = rng.random_range(0..12);
        let (got, want) = match tier {
            InferenceMode::S => (sensor_heuristic(&tracker, b, &p), ref_sensor(sigma, tau, h, b, &p)),
            InferenceMode::G => (
                gateway_heuristic(&tracker, b, q, &p),
                ref_gateway(sigma, tau, h, b, q, &p),
            ),
            InferenceMode::C => (cloud_heuristic(&tracker, b, &p), ref_cloud(sigma, tau, h, b, &p)),
        };
        if got != want {
            verdict_mismatch += 1;
        }
    }
    r.check(
        "5a history count equivalence",
        sigma_mismatch == 0,
        format!("{sigma_mismatch} mismatches in {draws} draws"),
    );
    r.check(
        "5b heuristic verdict equivalence",
        verdict_mismatch == 0,
        format!("{verdict_mismatch} mismatches in {draws} draws"),
    );
    r.timed("5c runtime", start.elapsed(), Duration::from_secs(30));
}

fn depth_of(p: &HeuristicParams, mode: InferenceMode) -> u32 {
    p.depth(mode)
}

/// Transition legality and reset coupling over one trace.
fn check_transitions(trace: &[TraceRecord], p: &HeuristicParams) -> (u64, u64, u64, u64) {
    let mut mode: BTreeMap<NodeId, InferenceMode> = BTreeMap::new();
    let mut tau: BTreeMap<NodeId, u32> = BTreeMap::new();
    let (mut transitions, mut illegal, mut bad_resets, mut violations) = (0, 0, 0, 0);
    for row in trace {
        let Some(id) = row.node else { continue };
        match row.kind {
            TraceKind::RunStart => {
                mode.insert(id, row.mode.unwrap());
            }
            TraceKind::ProtocolViolation => violations += 1,
            TraceKind::ModeChange => {
                transitions += 1;
                let to = row.mode.unwrap();
                if !mode[&id].can_transition_to(to) {
                    illegal += 1;
                }
                mode.insert(id, to);
                if row.history.unwrap().tau != 0 {
                    bad_resets += 1;
                }
                tau.insert(id, 0);
            }
            TraceKind::Prediction => {
                let h = row.history.unwrap();
                let tier = row.mode.unwrap();
                let prev = tau.get(&id).copied().unwrap_or(0);
                // outside a mode change, tau only ever grows by one up to the depth
                if tier != mode[&id] || h.tau != (prev + 1).min(depth_of(p, tier)) {
                    bad_resets += 1;
                }
                tau.insert(id, h.tau);
            }
            _ => {}
        }
    }
    (transitions, illegal, bad_resets, violations)
}

fn transition_legality(r: &mut Report) {
    let mut rng = seed::stream(6, "acceptance-scenarios", 0);
    let (mut total, mut illegal, mut bad_resets, mut violations) = (0, 0, 0, 0);
    for i in 0..100 {
        let mut s = Scenario::default();
        s.seed = rng.random();
        s.duration_ms = 3_600_000;
        s.fleet.count = 3;
        s.ground_truth.anomaly_probability = 0.05 + 0.85 * i as f64 / 99.0;
        s.fleet.initial_battery_pct = rng.random_range(15.0..=100.0);
        s.fleet.sleep_period_ms = [0, 5_000, 30_000][rng.random_range(0..3)];
        let run = run_scenario(&s, None).unwrap();
        let (t, il, br, v) = check_transitions(&run.output.trace, &s.heuristics);
        total += t;
        illegal += il;
        bad_resets += br;
        violations += v;
    }
    r.check(
        "6a transitions are graph edges",
        illegal == 0 && total > 0,
        format!("{illegal} illegal of {total} transitions in 100 scenarios"),
    );
    r.check(
        "6b history resets only on mode change",
        bad_resets == 0,
        format!("{bad_resets} resets without a mode change"),
    );
    r.check("6c protocol violations", violations == 0, format!("{violations} violations"));
}

fn oracle_calibration(r: &mut Report) {
    let n = 100_000u32;
    for tier in InferenceMode::ALL {
        let profile = TierAccuracyProfile::for_tier(tier);
        let mut rng = seed::stream(7, "acceptance-calibration", tier.index() as u64);
        let mut worst = 0f64;
        for class in ConditionClass::ALL {
            let hits = (0..n).filter(|_| profile.classify(class, &mut rng) == class).count();
            let p = profile.recall[class.index()];
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            let z = (hits as f64 / n as f64 - p).abs() / sd;
            worst = worst.max(z);
        }
        r.check(
            &format!("7 oracle recall {tier}"),
            worst <= 3.0,
            format!("worst class {worst:.2} sd from configured recall (limit 3)"),
        );
    }
}

fn determinism(r: &mut Report) {
    for name in Scenario::preset_names() {
        let s = Scenario::preset(name).unwrap();
        let a = run_scenario(&s, None).unwrap().render().unwrap();
        let b = run_scenario(&s, None).unwrap().render().unwrap();
        r.check(
            &format!("8 determinism {name}"),
            a == b,
            format!("{} trace bytes, all artifacts identical: {}", a[0].1.len(), a == b),
        );
    }
}

fn mode_path(trace: &[TraceRecord]) -> Vec<InferenceMode> {
    trace
        .iter()
        .filter(|r| r.kind == TraceKind::ModeChange)
        .map(|r| r.mode.unwrap())
        .collect()
}

fn dynamics(r: &mut Report) {
    let preset = Scenario::preset("paper-latency").unwrap();
    let (mut escalated, mut deescalated) = (0, 0);
    for seed in 0..10 {
        let mut s = preset.clone();
        s.seed = seed;
        let run = run_scenario(&s, None).unwrap();
        let mut prev = InferenceMode::S;
        let (mut up, mut down) = (false, false);
        for m in mode_path(&run.output.trace) {
            up |= prev == InferenceMode::S && m == InferenceMode::G;
            down |= m < prev;
            prev = m;
        }
        escalated += up as u32;
        deescalated += down as u32;
    }
    r.check(
        "9a p=0.3 escalates and de-escalates",
        escalated > 0 && deescalated > 0,
        format!("S->G in {escalated}/10 seeds, de-escalation in {deescalated}/10 seeds"),
    );

    let mut left_s = 0;
    for seed in 0..10 {
        let mut s = preset.clone();
        s.seed = seed;
        s.ground_truth.anomaly_probability = 0.0;
        left_s += mode_path(&run_scenario(&s, None).unwrap().output.trace).len();
    }
    r.check("9b p=0 stays in S", left_s == 0, format!("{left_s} mode changes over 10 seeds"));

    let mut stuck_in_c = 0;
    for seed in 0..10 {
        let mut s = preset.clone();
        s.seed = seed;
        s.ground_truth.anomaly_probability = 1.0;
        let run = run_scenario(&s, None).unwrap();
        let path = mode_path(&run.output.trace);
        let first_c = path.iter().position(|m| *m == InferenceMode::C);
        if first_c.is_some_and(|i| i == path.len() - 1)
            && run.summary.nodes[0].final_mode == Some(InferenceMode::C)
        {
            stuck_in_c += 1;
        }
    }
    r.check(
        "9c p=1 reaches C and stays",
        stuck_in_c == 10,
        format!("{stuck_in_c}/10 seeds end in C with no later change"),
    );
}

fn main() {
    let mut r = Report { failures: 0 };
    battery_bounds(&mut r);
    savings(&mut r);
    cycle_arithmetic(&mut r);
    latency(&mut r);
    heuristic_oracle(&mut r);
    transition_legality(&mut r);
    oracle_calibration(&mut r);
    determinism(&mut r);
    dynamics(&mut r);
    if r.failures > 0 {
        println!("{} acceptance checks failed", r.failures);
        std::process::exit(1);
    }
    println!("all acceptance checks passed");
}
