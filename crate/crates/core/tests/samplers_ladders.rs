use uipt_peel::exact_laws::*;
use uipt_peel::experiments::stats::{chi_square_gof, chi_square_independence, ks_two_sample};
use uipt_peel::ladder_walks::*;
use uipt_peel::samplers::*;

const ALPHA: f64 = 1e-3;

/// Chi-square goodness of fit of `draw` against `probs` over cells `0..probs.len()`.
fn gof(n: usize, probs: &[f64], mut draw: impl FnMut() -> usize) -> f64 {
    let mut counts = vec![0u64; probs.len()];
    for _ in 0..n {
        counts[draw().min(probs.len() - 1)] += 1;
    }
    chi_square_gof(&counts, probs).unwrap().p_value
}

#[test]
fn step_sampler_matches_law() {
    let sampler = StepSampler::shared();
    let mut rng = RngStream::new(11, 0);
    // Cells: +1, −1, …, −60, then ≤ −61.
    let mut probs = vec![step_pmf(1)];
    probs.extend((1..=60).map(|k| step_pmf(-k)));
    probs.push(step_tail(61));
    let p = gof(400_000, &probs, || match sampler.sample_step(&mut rng) {
        1 => 0,
        k => (-k) as usize,
    });
    assert!(p > ALPHA, "p={p}");
}

#[test]
fn step_sampler_far_tail() {
    // P(ξ ≤ −1000) ≈ 5.9e-6; 2·10^6 draws see about 12 such jumps.
    let sampler = StepSampler::shared();
    let mut rng = RngStream::new(12, 0);
    let n = 2_000_000;
    let hits = (0..n).filter(|_| sampler.sample_step(&mut rng) <= -1000).count() as f64;
    let mean = n as f64 * step_tail(1000);
    assert!((hits - mean).abs() <= 4.0 * mean.sqrt() + 1.0, "hits={hits} mean={mean}");
}

#[test]
fn kernel_sampler_matches_rows() {
    let sampler = StepSampler::shared();
    for (i, n) in [3i64, 4, 10, 100].into_iter().enumerate() {
        let mut rng = RngStream::new(13, i as u64);
        let probs: Vec<f64> = (2..=n + 1).map(|m| kernel_pmf(n, m).unwrap()).collect();
        let p = gof(100_000, &probs, || (sampler.sample_conditioned_step(&mut rng, n).unwrap() - 2) as usize);
        assert!(p > ALPHA, "n={n} p={p}");
    }
    let mut rng = RngStream::new(13, 9);
    assert!(sampler.sample_conditioned_step(&mut rng, 1).is_err());
    for _ in 0..1000 {
        assert_eq!(sampler.sample_conditioned_step(&mut rng, 2).unwrap(), 3);
    }
}

#[test]
fn positive_step_matches_h_transform() {
    let sampler = StepSampler::shared();
    let x = 4i64;
    let mut rng = RngStream::new(14, 0);
    // Jumps +1, −1, −2, −3 from x = 4.
    let probs: Vec<f64> = [1i64, -1, -2, -3].iter().map(|&k| harmonic_h(x + k) / harmonic_h(x) * step_pmf(k)).collect();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let p = gof(100_000, &probs, || match sampler.sample_positive_step(&mut rng, x) {
        1 => 0,
        k => (-k) as usize,
    });
    assert!(p > ALPHA, "p={p}");
}

#[test]
fn boltzmann_sampler_matches_pmf() {
    for (i, d) in [2u64, 3, 7, 20].into_iter().enumerate() {
        let mut rng = RngStream::new(15, i as u64);
        let cells = 300usize;
        let mut probs: Vec<f64> = (0..cells as u64).map(|n| boltzmann_volume_pmf(d, n)).collect();
        probs.push(1.0 - probs.iter().sum::<f64>());
        let jump = 1 - d as i64;
        let p = gof(100_000, &probs, || sample_boltzmann_volume(&mut rng, jump).unwrap() as usize);
        assert!(p > ALPHA, "d={d} p={p}");
    }
}

#[test]
fn boltzmann_sample_mean() {
    let mut rng = RngStream::new(16, 0);
    let n = 200_000;
    let d = 4u64;
    let mean = (0..n).map(|_| sample_boltzmann_volume(&mut rng, 1 - d as i64).unwrap() as f64).sum::<f64>() / n as f64;
    // Infinite variance (tail n^{−3/2}); allow a loose band.
    assert!((mean - boltzmann_volume_mean(d)).abs() < 0.25 * boltzmann_volume_mean(d), "mean={mean}");
}

#[test]
fn exponential_holding_times() {
    let mut rng = RngStream::new(17, 0);
    let n = 200_000;
    let mean = (0..n).map(|_| sample_exponential(&mut rng, 0.5).unwrap()).sum::<f64>() / n as f64;
    assert!((mean - 2.0).abs() < 0.03);
    assert!(sample_exponential(&mut rng, 0.0).is_err());
    assert!(sample_exponential(&mut rng, f64::NAN).is_err());
}

#[test]
fn coloring_is_fair() {
    let mut rng = RngStream::new(18, 0);
    let n = 1_000_000;
    let red = (0..n).filter(|_| sample_coloring(&mut rng)).count() as f64;
    assert!((red / n as f64 - 0.5).abs() < 4.0 * 0.5 / (n as f64).sqrt());
}

#[test]
fn seed_derivation() {
    assert_eq!(derive_seed(42, "lambda"), derive_seed(42, "lambda"));
    assert_ne!(derive_seed(42, "lambda"), derive_seed(42, "quadruples"));
    assert_ne!(derive_seed(42, "lambda"), derive_seed(43, "lambda"));
    let a: Vec<u64> = (0..4).map(|_| RngStream::new(5, 0).uniform().to_bits()).collect();
    assert!(a.windows(2).all(|w| w[0] == w[1]));
}

fn legs() -> LadderConfig {
    LadderConfig { max_events: 1 << 15, volume_cap: Some(1 << 20) }
}

#[test]
fn quadruple_invariants() {
    let sampler = StepSampler::shared();
    let cfg = legs();
    let mut rng = RngStream::new(19, 0);
    let mut kept = 0;
    for _ in 0..3000 {
        match sample_quadruple(&mut rng, &sampler, &cfg) {
            QuadrupleDraw::Kept(q) => {
                kept += 1;
                assert!(q.t > 0.0 && q.u > 0.0);
                assert!(q.h >= 1 && q.l >= q.h);
                assert!(q.vr >= 1, "the climb ends with a +1 step of volume 1");
            }
            QuadrupleDraw::Discarded { t_leg, u_leg } => {
                assert!(!t_leg.complete || u_leg.is_some_and(|u| !u.complete));
            }
        }
    }
    assert!(kept > 2800);
}

fn ladder_cells(cells: usize) -> (Vec<f64>, Vec<f64>) {
    let mut hp: Vec<f64> = (1..=cells as u64).map(ladder_height_pmf).collect();
    hp.push(1.0 - hp.iter().sum::<f64>());
    let mut lp: Vec<f64> = (1..=cells as u64).map(ladder_jump_pmf).collect();
    lp.push(1.0 - lp.iter().sum::<f64>());
    (hp, lp)
}

#[test]
fn ladder_height_and_jump_laws() {
    let sampler = StepSampler::shared();
    let cfg = LadderConfig { max_events: 1 << 20, volume_cap: None };
    let mut rng = RngStream::new(20, 0);
    let cells = 12usize;
    let mut h_counts = vec![0u64; cells + 1];
    let mut l_counts = vec![0u64; cells + 1];
    let mut incomplete = 0;
    for _ in 0..20_000 {
        let leg = sample_unconditioned_leg_t(&mut rng, &sampler, &cfg);
        let (h, l) = if leg.complete {
            assert_eq!(leg.end, -(leg.h as i64));
            (leg.h, leg.l)
        } else {
            incomplete += 1;
            assert!(leg.end >= 0);
            sample_crossing_from(&mut rng, &sampler, leg.end)
        };
        h_counts[(h as usize - 1).min(cells)] += 1;
        l_counts[(l as usize - 1).min(cells)] += 1;
    }
    assert!(incomplete < 400);
    let (hp, lp) = ladder_cells(cells);
    assert!(chi_square_gof(&h_counts, &hp).unwrap().p_value > ALPHA);
    assert!(chi_square_gof(&l_counts, &lp).unwrap().p_value > ALPHA);
}

#[test]
fn killed_green_solves_its_equation() {
    // G(x, y) = 1{x = y} + p_1 G(x+1, y) + Σ_{k ≤ x} p_{−k} G(x−k, y).
    for y in 0..40i64 {
        for x in 0..40i64 {
            let mut rhs = if x == y { 1.0 } else { 0.0 };
            rhs += step_pmf(1) * killed_green(x + 1, y);
            rhs += (1..=x).map(|k| step_pmf(-k) * killed_green(x - k, y)).sum::<f64>();
            let g = killed_green(x, y);
            assert!((g - rhs).abs() < 1e-12 * g, "x={x} y={y} G={g} rhs={rhs}");
        }
    }
    assert!((killed_green(0, 0) - 1.5).abs() < 1e-15);
}

#[test]
fn crossing_from_zero_matches_ladder_laws() {
    let sampler = StepSampler::shared();
    let mut rng = RngStream::new(26, 0);
    let cells = 30usize;
    let mut h_counts = vec![0u64; cells + 1];
    let mut l_counts = vec![0u64; cells + 1];
    for _ in 0..200_000 {
        let (h, l) = sample_crossing_from(&mut rng, &sampler, 0);
        h_counts[(h as usize - 1).min(cells)] += 1;
        l_counts[(l as usize - 1).min(cells)] += 1;
    }
    let (hp, lp) = ladder_cells(cells);
    assert!(chi_square_gof(&h_counts, &hp).unwrap().p_value > ALPHA);
    assert!(chi_square_gof(&l_counts, &lp).unwrap().p_value > ALPHA);
}

#[test]
fn crossing_from_level_matches_direct_walks() {
    // Direct walks from 5 still above 0 after 2^20 jumps (about 2%) are
    // finished exactly from where they stopped.
    let sampler = StepSampler::shared();
    let start = 5i64;
    let cells = 10usize;
    let n = 20_000;
    let cell = |v: u64| (v as usize - 1).min(cells);
    let mut rng = RngStream::new(27, 0);
    let mut direct = [vec![0u64; cells + 1], vec![0u64; cells + 1]];
    let mut finished = 0;
    for _ in 0..n {
        let mut pos = start;
        let mut events = 0u64;
        loop {
            let k = sampler.sample_step(&mut rng);
            pos += k;
            events += 1;
            if pos < 0 {
                direct[0][cell((-pos) as u64)] += 1;
                direct[1][cell((-k) as u64)] += 1;
                break;
            }
            if events == 1 << 20 {
                finished += 1;
                let (h, l) = sample_crossing_from(&mut rng, &sampler, pos);
                direct[0][cell(h)] += 1;
                direct[1][cell(l)] += 1;
                break;
            }
        }
    }
    assert!(finished < n / 20, "finished={finished}");
    let mut rng = RngStream::new(27, 1);
    let mut exact = [vec![0u64; cells + 1], vec![0u64; cells + 1]];
    for _ in 0..n {
        let (h, l) = sample_crossing_from(&mut rng, &sampler, start);
        assert!(l >= h && h >= 1);
        exact[0][cell(h)] += 1;
        exact[1][cell(l)] += 1;
    }
    for i in 0..2 {
        let p = chi_square_independence(&[direct[i].clone(), exact[i].clone()]).unwrap().p_value;
        assert!(p > ALPHA, "series {i}: p={p}");
    }
}

#[test]
fn independent_t_samples_agree() {
    let sampler = StepSampler::shared();
    let cfg = LadderConfig { max_events: 1 << 15, volume_cap: None };
    let draw = |seed| {
        let mut rng = RngStream::new(seed, 0);
        (0..20_000)
            .map(|_| sample_unconditioned_leg_t(&mut rng, &sampler, &cfg))
            .filter(|l| l.complete)
            .map(|l| l.t)
            .collect::<Vec<_>>()
    };
    let r = ks_two_sample(&draw(21), &draw(22)).unwrap();
    assert!(r.p_value > ALPHA, "p={}", r.p_value);
}

#[test]
fn lambda_law_from_quadruples() {
    let sampler = StepSampler::shared();
    let cfg = legs();
    let k_cap = 10u64;
    let mut counts = vec![0u64; k_cap as usize + 1];
    for i in 0..3000 {
        let mut rng = RngStream::new(23, i);
        let rec = run_lambda(&mut rng, &sampler, &cfg, k_cap, 10);
        assert_eq!(rec.prefix.len(), 10);
        match rec.lambda {
            Some(k) => {
                assert!(rec.t_sum < rec.u_sum);
                assert_eq!(rec.prefix[k as usize - 1], (rec.t_sum, rec.u_sum));
                assert!(rec.prefix[..k as usize - 1].iter().all(|&(t, u)| t >= u));
                counts[k as usize - 1] += 1;
            }
            None => {
                assert!(rec.prefix.iter().all(|&(t, u)| t >= u));
                counts[k_cap as usize] += 1;
            }
        }
    }
    let mut probs: Vec<f64> = (1..=k_cap).map(lambda_pmf).collect();
    probs.push(1.0 - probs.iter().sum::<f64>());
    let p = chi_square_gof(&counts, &probs).unwrap().p_value;
    assert!(p > ALPHA, "p={p}");
}

#[test]
fn conditioned_walk_is_transient() {
    // P_100(ever below 50) ≤ h(50)/h(100); stopping at 1000 only lowers the fraction.
    let sampler = StepSampler::shared();
    let n = 2000;
    let returned = (0..n)
        .filter(|&i| {
            let mut rng = RngStream::new(24, i);
            let s = simulate_conditioned_r(&mut rng, &sampler, 100, 50, 1000, 1 << 24, None);
            assert!(s.hit_below || s.hit_above);
            assert!(s.min_level >= 1);
            s.hit_below
        })
        .count() as f64;
    let bound = harmonic_h(50) / harmonic_h(100);
    let sigma = (bound * (1.0 - bound) / n as f64).sqrt();
    assert!(returned / n as f64 <= bound + 3.0 * sigma, "fraction={}", returned / n as f64);
    assert!(returned > 0.0);
}

#[test]
fn last_passage_matches_climb_time() {
    // At eps = 0.05 at most 5% of direct paths can revisit the level after the
    // stop, which shifts the law by less than the KS resolution at this size.
    let sampler = StepSampler::shared();
    let cfg = LadderConfig { max_events: 1 << 24, volume_cap: None };
    let h = 3u64;
    let mut rng = RngStream::new(25, 0);
    let direct: Vec<f64> =
        (0..3000).filter_map(|_| direct_last_passage(&mut rng, &sampler, h, 0.05, &cfg)).map(|(u, _)| u).collect();
    let mut rng = RngStream::new(25, 1);
    let climb: Vec<f64> = (0..3000)
        .map(|_| sample_leg_u_given_h(&mut rng, &sampler, h, &cfg))
        .filter(|l| l.complete)
        .map(|l| l.u)
        .collect();
    assert!(direct.len() > 2900 && climb.len() > 2900);
    let r = ks_two_sample(&direct, &climb).unwrap();
    assert!(r.p_value > ALPHA, "p={}", r.p_value);
}

#[test]
fn joint_inclusions_hold() {
    let sampler = StepSampler::shared();
    // eps = 0.1 keeps the red climb short; a misplaced last passage could only
    // break an inclusion, so a clean run at this level is still informative.
    let caps = JointCaps { ladders: 3, event_cap: 1 << 22, eps: 0.1 };
    let mut flagged = 0;
    for i in 0..300 {
        let mut rng = RngStream::new(26, i);
        let out = joint_two_walk_theta(&mut rng, &sampler, caps);
        if out.flagged {
            flagged += 1;
            continue;
        }
        assert!(out.inclusions_ok, "path {i}: {:?}", out.ladders);
        assert_eq!(out.ladders.len(), 3);
        assert!(out.ladders.windows(2).all(|w| w[0].0 < w[1].0 && w[0].2 < w[1].2));
    }
    assert!(flagged < 60, "flagged={flagged}");
}

#[test]
fn unconditioned_walk_has_zero_drift() {
    let sampler = StepSampler::shared();
    let mut rng = RngStream::new(27, 0);
    let mut below = 0;
    for _ in 0..2000 {
        let (s, m) = unconditioned_walk_summary(&mut rng, &sampler, 100);
        assert!(m <= 0 && m <= s);
        below += i32::from(s < 0);
    }
    // P(S_n < 0) → 1 − ρ = 1/3, with positivity ρ = 1/α = 2/3 for a spectrally negative 3/2-stable walk.
    let frac = below as f64 / 2000.0;
    assert!((0.28..0.39).contains(&frac), "frac={frac}");
}
