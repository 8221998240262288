use rand::Rng;
use textcraft_core::record::TickSample;

/// Raw per-tick increments: cap step, used step, minerals, gas, forced block, new kind.
pub type Step = (u32, u32, u64, u64, bool, bool);

pub fn random_steps(rng: &mut impl Rng) -> Vec<Step> {
    let n = rng.random_range(1..300);
    (0..n)
        .map(|_| {
            (
                rng.random_range(0..=3),
                rng.random_range(0..=60),
                rng.random_range(0..200),
                rng.random_range(0..120),
                rng.random_bool(0.1),
                rng.random_bool(0.05),
            )
        })
        .collect()
}

/// A plausible sample trace: caps grow by pylon steps, supply never exceeds cap.
pub fn samples_from_steps(steps: Vec<Step>) -> Vec<TickSample> {
    let mut out = Vec::with_capacity(steps.len());
    let (mut cap, mut used, mut minerals, mut gas, mut kinds) = (15u32, 12u32, 0u64, 0u64, 1u32);
    for (tick, (cap_step, used_step, m, g, block, tech)) in steps.into_iter().enumerate() {
        cap = (cap + cap_step * 8).min(200);
        used = if block { cap } else { (used + used_step / 20).min(cap) };
        minerals += m;
        gas += g;
        kinds += u32::from(tech);
        out.push(TickSample {
            tick: tick as u32 + 1,
            supply_used: used,
            supply_cap: cap,
            total_minerals_spent: minerals,
            total_gas_spent: gas,
            at_population_cap: used == cap,
            completed_kinds: kinds,
        });
    }
    out
}

/// Straight-line recomputation of (PBR, RUR, APU, TR).
pub fn brute_force(samples: &[TickSample], total_kinds: u32) -> (f64, f64, f64, f64) {
    let mut horizon = samples[samples.len() - 1].tick;
    for s in samples {
        if s.supply_used >= 200 && s.supply_cap >= 200 {
            horizon = s.tick;
            break;
        }
    }
    let mut capped = 0u32;
    let mut ratio_sum = 0.0;
    let mut n = 0u32;
    let mut spent = 0u64;
    for s in samples {
        if s.tick > horizon {
            break;
        }
        if s.supply_used == s.supply_cap {
            capped += 1;
        }
        ratio_sum += if s.supply_cap > 0 { s.supply_used as f64 / s.supply_cap as f64 } else { 0.0 };
        n += 1;
        spent = s.total_minerals_spent + s.total_gas_spent;
    }
    let mut best = 0;
    for s in samples {
        if s.completed_kinds > best {
            best = s.completed_kinds;
        }
    }
    let h = horizon as f64;
    (capped as f64 / h, spent as f64 / h, ratio_sum / n as f64, best as f64 / total_kinds as f64)
}

/// Largest absolute difference between the library metrics and the oracle.
pub fn oracle_gap(samples: &[TickSample], total_kinds: u32) -> f64 {
    let r = textcraft_core::metrics::compute_samples("oracle", samples, total_kinds, 1).unwrap();
    let (pbr, rur, apu, tr) = brute_force(samples, total_kinds);
    [(r.pbr, pbr), (r.rur, rur), (r.apu, apu), (r.tr, tr)].iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
