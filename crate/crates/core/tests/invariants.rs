use fext_turbo::channel::{apply_channel, noise_enhancement, synthesize_channel, CableModelParams, ToneChannel, ToneGrid};
use fext_turbo::de::{self, binary, continuous, crossover_bits, mutate_bits, BitVector, DeParams};
use fext_turbo::detectors::{cf_mud, dea_mud, ml_detect, sud_detect, zf_detect};
use fext_turbo::estimation::{cf_ce, dea_ce, ls_estimate, ncrlb, PilotBlock};
use fext_turbo::fec::{LlrFrame, LlrRole, TurboCode, TurboCodeConfig, LLR_MAX};
use fext_turbo::linalg::{cgauss, CMatrix};
use fext_turbo::modem::Constellation;
use fext_turbo::rng::substream;
use fext_turbo::Complex64;
use proptest::prelude::*;
use rand::Rng;

const ORDERS: [usize; 6] = [4, 16, 64, 256, 1024, 4096];

fn random_channel(seed: u64, l: usize) -> CMatrix {
    let mut rng = substream(seed, &[1]);
    CMatrix::from_fn(l, l, |r, c| {
        let d = if r == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
        d + cgauss(&mut rng, 0.1)
    })
}

fn tone(matrix: CMatrix) -> ToneChannel {
    ToneChannel {
        tone_index: 0,
        center_freq_hz: 1e6,
        matrix,
    }
}

fn small_params(pop: usize, g_max: usize) -> DeParams {
    DeParams {
        pop_size: pop,
        g_max,
        ..DeParams::mud_default()
    }
}

fn qam_block(c: &Constellation, l: usize, s: usize, seed: u64) -> CMatrix {
    let mut rng = substream(seed, &[2]);
    CMatrix::from_fn(l, s, |_, _| c.point(rng.random_range(0..c.order())))
}

fn noisy(h: &CMatrix, x: &CMatrix, sigma2: f64, seed: u64) -> CMatrix {
    let mut rng = substream(seed, &[3]);
    let clean = h * x;
    CMatrix::from_fn(clean.nrows(), clean.ncols(), |r, c| clean[(r, c)] + cgauss(&mut rng, sigma2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn channel_is_reproducible(seed in any::<u64>(), len in 20.0f64..300.0, lines in 1usize..5) {
        let grid = ToneGrid::gfast(32);
        let p = CableModelParams { seed, loop_length_m: len, ..CableModelParams::default() };
        let a = synthesize_channel(&grid, &p, lines).unwrap();
        let b = synthesize_channel(&grid, &p, lines).unwrap();
        prop_assert_eq!(&a, &b);
        let x = vec![Complex64::new(1.0, -1.0); lines];
        let ya = apply_channel(&a[7], &x, 0.1, None, &mut substream(seed, &[9]));
        let yb = apply_channel(&b[7], &x, 0.1, None, &mut substream(seed, &[9]));
        prop_assert_eq!(ya, yb);
    }

    #[test]
    fn noiseless_channel_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let h = tone(random_channel(seed, 4));
        let mut rng = substream(seed, &[4]);
        let x1: Vec<Complex64> = (0..4).map(|_| cgauss(&mut rng, 1.0)).collect();
        let x2: Vec<Complex64> = (0..4).map(|_| cgauss(&mut rng, 1.0)).collect();
        let mix: Vec<Complex64> = x1.iter().zip(&x2).map(|(u, v)| u * a + v * b).collect();
        let y = apply_channel(&h, &mix, 0.0, None, &mut rng);
        let y1 = apply_channel(&h, &x1, 0.0, None, &mut rng);
        let y2 = apply_channel(&h, &x2, 0.0, None, &mut rng);
        for i in 0..4 {
            prop_assert!((y[i] - (y1[i] * a + y2[i] * b)).norm() < 1e-9);
        }
    }

    #[test]
    fn demap_sign_agrees_with_slicer(k in 0usize..6, re in -3.0f64..3.0, im in -3.0f64..3.0) {
        let c = Constellation::qam(ORDERS[k]).unwrap();
        let y = Complex64::new(re, im);
        let llr = c.demap_soft(y, Complex64::new(1.0, 0.0), 0.05, &vec![0.0; c.bits_per_symbol()]);
        let hard = c.slice_hard(y);
        for (l, b) in llr.iter().zip(&hard) {
            // Positive LLR favours bit 0; exact ties carry no information.
            prop_assert!(*l == 0.0 || (*l > 0.0) == (*b == 0), "llr {} bit {}", l, b);
        }
    }

    #[test]
    fn turbo_code_round_trips(seed in any::<u64>(), k in 1usize..200) {
        let code = TurboCode::new(TurboCodeConfig::new(k, seed)).unwrap();
        let mut rng = substream(seed, &[5]);
        let info: Vec<u8> = (0..k).map(|_| rng.random_range(0..2u8)).collect();
        let coded = code.encode(&info).unwrap();
        let llr = coded.iter().map(|&b| if b == 0 { LLR_MAX } else { -LLR_MAX }).collect();
        let out = code.decode(&LlrFrame::new(llr, LlrRole::CPr)).unwrap();
        prop_assert_eq!(out.hard_bits, info);
        prop_assert!(out.c_po.values.iter().all(|v| v.abs() <= LLR_MAX));
    }

    #[test]
    fn decoder_llrs_saturate(seed in any::<u64>(), k in 1usize..100, scale in 0.1f64..1e6) {
        let code = TurboCode::new(TurboCodeConfig::new(k, 3)).unwrap();
        let mut rng = substream(seed, &[6]);
        let llr: Vec<f64> = (0..code.coded_len()).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let out = code.decode(&LlrFrame::new(llr, LlrRole::CPr)).unwrap();
        prop_assert!(out.c_po.values.iter().all(|v| v.is_finite() && v.abs() <= LLR_MAX));
        prop_assert!(out.hard_bits.iter().all(|&b| b <= 1));
    }

    #[test]
    fn control_parameters_stay_in_range(seed in any::<u64>(), mu in -1.0f64..2.0, sigma in 0.0f64..1.0) {
        let mut rng = substream(seed, &[7]);
        for _ in 0..200 {
            let l = de::sample_lambda(mu, sigma, &mut rng);
            let cr = de::sample_cr(mu, sigma, &mut rng);
            prop_assert!(l > 0.0 && l <= 1.0);
            prop_assert!((0.0..=1.0).contains(&cr));
        }
    }

    #[test]
    fn binary_operators_close_over_bits(seed in any::<u64>(), len in 1usize..300, cr in 0.0f64..=1.0) {
        let mut rng = substream(seed, &[8]);
        let rand_bits = |rng: &mut fext_turbo::rng::SimRng| {
            BitVector::from_bits(&(0..len).map(|_| rng.random_range(0..2u8)).collect::<Vec<_>>())
        };
        let (a, b, c, d) = (rand_bits(&mut rng), rand_bits(&mut rng), rand_bits(&mut rng), rand_bits(&mut rng));
        let mask = binary::make_bit_mask(0.5, 0.1, len, &mut rng);
        let donor = mutate_bits(&a, &b, &c, &d, &mask);
        let trial = crossover_bits(&a, &donor, cr, &mut rng);
        for v in [&donor, &trial] {
            prop_assert_eq!(v.len(), len);
            prop_assert!(v.to_bits().iter().all(|&x| x <= 1));
            prop_assert_eq!(v.count_ones(), v.to_bits().iter().filter(|&&x| x == 1).count());
        }
    }

    #[test]
    fn de_runs_are_monotone_and_reproducible(seed in any::<u64>(), dim in 1usize..6) {
        let p = small_params(20, 40);
        let target: Vec<f64> = (0..dim).map(|i| 0.3 * i as f64 - 0.5).collect();
        let cf = |g: &Vec<f64>| g.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let mut archive_ok = true;
        let a = continuous::run_observed(cf, dim, &p, seed, |pop| {
            let worst = pop.archive.iter().map(|&i| pop.cf_values[i]).fold(f64::MIN, f64::max);
            let outside = (0..pop.individuals.len()).filter(|i| !pop.archive.contains(i));
            archive_ok &= pop.archive.len() == p.archive_size();
            archive_ok &= outside.map(|i| pop.cf_values[i]).all(|v| v >= worst);
            archive_ok &= pop.best_cf() == pop.cf_values.iter().copied().fold(f64::INFINITY, f64::min);
        }).unwrap();
        let b = continuous::run(cf, dim, &p, seed).unwrap();
        prop_assert!(archive_ok);
        prop_assert!(a.best_trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(a.eval_count, p.pop_size as u64 * (1 + a.generations as u64));
        prop_assert_eq!(&a.best, &b.best);
        prop_assert_eq!(a.best_trace, b.best_trace);
    }

    #[test]
    fn ml_cost_lower_bounds_every_detector(seed in any::<u64>(), sigma2 in 0.001f64..0.5) {
        let c = Constellation::qam(4).unwrap();
        let h = random_channel(seed, 3);
        let x = qam_block(&c, 3, 1, seed);
        let y: Vec<Complex64> = noisy(&h, &x, sigma2, seed).iter().copied().collect();
        let ml = ml_detect(&y, &h, &c).unwrap();
        prop_assert_eq!(ml.eval_count, 64);
        let others = [
            sud_detect(&y, &h, &c).unwrap(),
            zf_detect(&y, &h, &c).unwrap(),
            dea_mud(&y, &h, &c, &small_params(16, 30), seed).unwrap(),
        ];
        for d in others.iter().chain(std::iter::once(&ml)) {
            prop_assert!(ml.cf_value <= d.cf_value + 1e-12);
            prop_assert!((d.cf_value - cf_mud(&d.symbols, &h, &y)).abs() < 1e-9);
            let bits: Vec<u8> = d.labels.iter().flat_map(|&m| c.label_bits(m)).collect();
            prop_assert_eq!(&d.bits, &bits);
            for (s, &m) in d.symbols.iter().zip(&d.labels) {
                prop_assert_eq!(*s, c.point(m));
            }
        }
        let dea = &others[2];
        prop_assert_eq!(dea.eval_count, 16 * (1 + dea.generations as u64));
    }

    #[test]
    fn larger_generation_budget_never_hurts(seed in any::<u64>(), g in 1usize..30) {
        let c = Constellation::qam(16).unwrap();
        let h = random_channel(seed, 4);
        let x = qam_block(&c, 4, 1, seed);
        let y: Vec<Complex64> = noisy(&h, &x, 0.05, seed).iter().copied().collect();
        let short = DeParams { g_max: g, delta_g: usize::MAX, ..small_params(20, g) };
        let long = DeParams { g_max: g + 10, ..short };
        let a = dea_mud(&y, &h, &c, &short, seed).unwrap();
        let b = dea_mud(&y, &h, &c, &long, seed).unwrap();
        prop_assert!(b.cf_value <= a.cf_value);
    }

    #[test]
    fn ls_minimizes_block_cost(seed in any::<u64>(), s in 4usize..40, eps in 1e-4f64..0.5) {
        let c = Constellation::qam(16).unwrap();
        let h = random_channel(seed, 4);
        let x = qam_block(&c, 4, s, seed);
        let y = noisy(&h, &x, 0.1, seed);
        let Ok(ls) = ls_estimate(&x, &y) else { return Ok(()) };
        let base = cf_ce(&ls.matrix, &x, &y);
        let mut rng = substream(seed, &[10]);
        for _ in 0..5 {
            let d = CMatrix::from_fn(4, 4, |_, _| cgauss(&mut rng, eps));
            prop_assert!(cf_ce(&(&ls.matrix + d), &x, &y) >= base - 1e-9 * base.max(1.0));
        }
    }

    #[test]
    fn ncrlb_scales_with_observed_symbols(sp in 1usize..64, extra in 1usize..1000, snr in 0.0f64..40.0) {
        let sigma2 = 10f64.powf(-snr / 10.0);
        let pilot = ncrlb(sp, 1.0, sigma2, 1.3).unwrap();
        let frame = ncrlb(sp + extra, 1.0, sigma2, 1.3).unwrap();
        let gap = 10.0 * (pilot / frame).log10();
        prop_assert!((gap - 10.0 * ((sp + extra) as f64 / sp as f64).log10()).abs() < 1e-9);
    }
}

#[test]
fn constellations_have_unit_energy_and_gray_neighbours() {
    for m in ORDERS {
        let c = Constellation::qam(m).unwrap();
        let mean: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
        assert!((mean - 1.0).abs() < 1e-12, "M={m}");
        let d = c.points().iter().map(|p| p.re).fold(f64::INFINITY, |acc, v| {
            c.points().iter().map(|q| (q.re - v).abs()).filter(|&x| x > 1e-12).fold(acc, f64::min)
        });
        for a in 0..m {
            for b in 0..m {
                if ((c.point(a) - c.point(b)).norm() - d).abs() < 1e-9 {
                    assert_eq!((a ^ b).count_ones(), 1, "M={m} labels {a} {b}");
                }
            }
        }
    }
}

#[test]
fn noise_enhancement_grows_with_frequency() {
    let grid = ToneGrid::gfast(256);
    let chans = synthesize_channel(&grid, &CableModelParams::default(), 4).unwrap();
    let octave_mean = |lo: f64| {
        let v: Vec<f64> = chans
            .iter()
            .filter(|t| t.center_freq_hz >= lo && t.center_freq_hz < 2.0 * lo)
            .map(|t| noise_enhancement(&t.normalized()).unwrap())
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let means: Vec<f64> = [6.5e6, 13e6, 26e6, 52e6, 104e6].iter().map(|&f| octave_mean(f)).collect();
    assert!(means.windows(2).all(|w| w[1] >= w[0]), "{means:?}");
}

#[test]
fn ls_is_unbiased() {
    let h = random_channel(11, 4);
    let pilots = PilotBlock::dft(4, 8, 1.0).unwrap();
    let trials = 4000;
    let mut acc = CMatrix::zeros(4, 4);
    for t in 0..trials {
        let y = noisy(&h, pilots.matrix(), 0.1, 1000 + t);
        acc += ls_estimate(pilots.matrix(), &y).unwrap().matrix;
    }
    let mean = acc / Complex64::new(trials as f64, 0.0);
    // Per-entry standard error is sqrt(0.1 / 8 / trials) ~ 1.8e-3.
    assert!((mean - &h).iter().all(|e| e.norm() < 1e-2));
}

#[test]
fn decision_feedback_beats_pilots_alone() {
    let c = Constellation::qam(16).unwrap();
    let pilots = PilotBlock::dft(4, 4, 1.0).unwrap();
    let sigma2 = 0.1;
    let trials = 100;
    let mut wins = 0;
    for t in 0..trials {
        let h = random_channel(500 + t, 4);
        let data = qam_block(&c, 4, 60, t);
        let mut x = CMatrix::zeros(4, 64);
        x.columns_mut(0, 4).copy_from(pilots.matrix());
        x.columns_mut(4, 60).copy_from(&data);
        let y = noisy(&h, &x, sigma2, t);
        let pilot_only = ls_estimate(pilots.matrix(), &y.columns(0, 4).into_owned()).unwrap();
        let genie = dea_ce(&x, &y, &DeParams::ce_default(), t).unwrap();
        let err = |m: &CMatrix| (m - &h).norm_squared();
        if err(&genie.matrix) <= err(&pilot_only.matrix) {
            wins += 1;
        }
    }
    assert!(wins >= 99, "{wins}/{trials}");
}
