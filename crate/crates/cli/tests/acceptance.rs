//! Acceptance suite. Every criterion prints one `[acceptance]` line with its
//! verdict straight to stderr (bypassing libtest capture) and then asserts.
//!
//! Tests share one lock so wall-clock budgets are not measured while another
//! criterion competes for the CPU.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use dermfair_core::colorspace::{is_skin_chroma, is_skin_pixel, skin_mask, LabPixel};
use dermfair_core::dataset::{split, ImageRecord, Manifest, Source, Split, SplitSpec, Superclass};
use dermfair_core::fixtures::{self, noisy_disc};
use dermfair_core::graphcut::{segment_maxflow, FlowNetwork, GraphCutParams};
use dermfair_core::image_io;
use dermfair_core::metrics::{auc, seg_scores, MetricsError};
use dermfair_core::skintone::{compute_ita, Fitzpatrick};
use dermfair_core::synthval::{glcm_features, glcm_features_with, GLCM_ANGLES};
use dermfair_core::synthval::{ssim, C1, C2};
use dermfair_core::{BinaryMask, GrayImage, RgbImage};

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(name: &str, pass: bool, elapsed: Duration, detail: impl Display) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!(
        "[acceptance] {verdict} {name} ({:.3}s): {detail}\n",
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn check(name: &str, start: Instant, budget: Duration, failures: &[String], detail: impl Display) {
    let elapsed = start.elapsed();
    let mut failures = failures.to_vec();
    if elapsed > budget {
        failures.push(format!("runtime {:.3}s over budget {:.1}s", elapsed.as_secs_f64(), budget.as_secs_f64()));
    }
    let pass = failures.is_empty();
    if pass {
        report(name, true, elapsed, detail);
    } else {
        report(name, false, elapsed, format!("{detail}; {}", failures.join("; ")));
    }
    assert!(pass, "{name} failed: {failures:?}");
}

// ---------------------------------------------------------------- ITA

#[test]
fn ita_unit_suite() {
    let _g = serial();
    let start = Instant::now();
    let mut fails = Vec::new();
    let lab = |l: f64, b: f64| LabPixel { l, a: 0.0, b };

    let zero = compute_ita(lab(50.0, 12.0)).unwrap();
    if zero.abs() > 1e-3 {
        fails.push(format!("L*=50 gave {zero}"));
    }
    let diag = compute_ita(lab(60.0, 10.0)).unwrap();
    if (diag - 45.0).abs() > 1e-3 {
        fails.push(format!("arctan(1) gave {diag}"));
    }
    let b = 20.0;
    let l = 50.0 - b * 30f64.to_radians().tan();
    let boundary = compute_ita(lab(l, b)).unwrap();
    if (boundary + 30.0).abs() > 1e-3 {
        fails.push(format!("-30 boundary gave {boundary}"));
    }
    if Fitzpatrick::from_ita(-30.0) != Fitzpatrick::V || Fitzpatrick::from_ita(-30.000_001) != Fitzpatrick::VI {
        fails.push("-30 inclusivity".into());
    }

    // Independent band table: (lower, lower_inclusive, upper, upper_inclusive).
    let table = [
        (Fitzpatrick::I, 55.0, false, f64::INFINITY, true),
        (Fitzpatrick::II, 40.0, false, 55.0, true),
        (Fitzpatrick::III, 27.0, false, 40.0, true),
        (Fitzpatrick::IV, 10.0, false, 27.0, true),
        (Fitzpatrick::V, -30.0, true, 10.0, true),
        (Fitzpatrick::VI, f64::NEG_INFINITY, true, -30.0, false),
    ];
    let mut seen = HashSet::new();
    let mut previous: Option<Fitzpatrick> = None;
    let mut samples = 0;
    for k in -9000i32..=9000 {
        let ita = f64::from(k) / 100.0;
        let owners: Vec<Fitzpatrick> = table
            .iter()
            .filter(|&&(_, lo, lo_inc, hi, hi_inc)| {
                (if lo_inc { ita >= lo } else { ita > lo }) && (if hi_inc { ita <= hi } else { ita < hi })
            })
            .map(|t| t.0)
            .collect();
        let got = Fitzpatrick::from_ita(ita);
        if owners.len() != 1 {
            fails.push(format!("ITA {ita}: {} bands claim it", owners.len()));
        } else if owners[0] != got {
            fails.push(format!("ITA {ita}: expected {} got {got}", owners[0]));
        }
        if let Some(p) = previous {
            // Bands only step from darker to lighter as ITA grows.
            if got.darkness() > p.darkness() {
                fails.push(format!("non-monotone at {ita}"));
            }
        }
        previous = Some(got);
        seen.insert(got);
        samples += 1;
    }
    if seen.len() != 6 {
        fails.push(format!("sweep reached {} bands", seen.len()));
    }
    fails.truncate(10);
    check(
        "ita_unit_suite",
        start,
        Duration::from_secs(1),
        &fails,
        format!("0deg={zero:.6}, 45deg={diag:.6}, -30deg={boundary:.6}, {samples} sweep points, 6 bands"),
    );
}

// ---------------------------------------------------------------- skin mask

/// Integer BT.601 chroma with coefficients scaled by 10^6, rounded half away
/// from zero and clamped.
fn oracle_chroma(r: i64, g: i64, b: i64) -> (u8, u8) {
    let round = |num: i64| -> i64 {
        let q = num.div_euclid(1_000_000);
        let rem = num.rem_euclid(1_000_000);
        let up = if num >= 0 { rem >= 500_000 } else { rem > 500_000 };
        q + i64::from(up)
    };
    let cb = round(128_000_000 - 168_736 * r - 331_264 * g + 500_000 * b);
    let cr = round(128_000_000 + 500_000 * r - 418_688 * g - 81_312 * b);
    (cb.clamp(0, 255) as u8, cr.clamp(0, 255) as u8)
}

#[test]
fn skin_mask_bounds() {
    let _g = serial();
    let start = Instant::now();
    let mut fails = Vec::new();
    for (cb, cr, want) in [
        (77, 133, true),
        (173, 255, true),
        (76, 133, false),
        (77, 132, false),
        (174, 255, false),
        (125, 200, true),
    ] {
        if is_skin_chroma(cb, cr) != want {
            fails.push(format!("({cb},{cr}) expected {want}"));
        }
    }

    let n = 100_000u32;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let pixels: Vec<[u8; 3]> = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    let image = RgbImage::from_fn(1000, n / 1000, |x, y| image::Rgb(pixels[(y * 1000 + x) as usize]));
    let mask = skin_mask(&image);
    let mut mismatches = 0;
    let mut skin = 0;
    for (i, p) in pixels.iter().enumerate() {
        let (cb, cr) = oracle_chroma(p[0].into(), p[1].into(), p[2].into());
        let want = (77..=173).contains(&cb) && cr >= 133;
        skin += usize::from(want);
        if is_skin_pixel(*p) != want || mask.bits()[i] != want {
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        fails.push(format!("{mismatches} fuzz mismatches"));
    }
    check(
        "skin_mask_bounds",
        start,
        Duration::from_secs(1),
        &fails,
        format!("boundary cases ok, {n} fuzz pixels ({skin} skin), Cr capped at 255 by the 8-bit type"),
    );
}

// ---------------------------------------------------------------- segmentation metrics

fn boundary_oracle(m: &[bool], w: i64, h: i64) -> Vec<(i64, i64)> {
    let at = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && m[(y * w + x) as usize];
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if at(x, y) && [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| !at(x + dx, y + dy)) {
                out.push((x, y));
            }
        }
    }
    out
}

fn hausdorff_oracle(a: &[(i64, i64)], b: &[(i64, i64)]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { f64::INFINITY };
    }
    let directed = |p: &[(i64, i64)], q: &[(i64, i64)]| {
        p.iter()
            .map(|&(x, y)| {
                q.iter()
                    .map(|&(u, v)| (((x - u).pow(2) + (y - v).pow(2)) as f64).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

#[test]
fn segmentation_metric_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let (w, h) = (16i64, 16i64);
    let mut max_identity_err = 0.0f64;
    let mut pairs = 0;
    while pairs < 1000 {
        let dp: f64 = rng.gen_range(0.0..1.0);
        let dt: f64 = rng.gen_range(0.02..1.0);
        let p: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(dp)).collect();
        let t: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(dt)).collect();
        let pm = BinaryMask::from_bits(w as u32, h as u32, p.clone());
        let tm = BinaryMask::from_bits(w as u32, h as u32, t.clone());
        let pset: HashSet<usize> = (0..p.len()).filter(|&i| p[i]).collect();
        let tset: HashSet<usize> = (0..t.len()).filter(|&i| t[i]).collect();
        if tset.is_empty() {
            if !matches!(seg_scores(&pm, &tm), Err(MetricsError::EmptyTruth)) {
                fails.push("empty truth not rejected".into());
            }
            continue;
        }
        pairs += 1;
        let inter = pset.intersection(&tset).count();
        let union = pset.union(&tset).count();
        let neg_truth = (w * h) as usize - tset.len();
        let true_neg = (0..p.len()).filter(|&i| !p[i] && !t[i]).count();
        let iou = inter as f64 / union as f64;
        let dice = 2.0 * inter as f64 / (pset.len() + tset.len()) as f64;
        let precision = (!pset.is_empty()).then(|| inter as f64 / pset.len() as f64);
        let recall = inter as f64 / tset.len() as f64;
        let specificity = (neg_truth > 0).then(|| true_neg as f64 / neg_truth as f64);
        let hd = hausdorff_oracle(&boundary_oracle(&p, w, h), &boundary_oracle(&t, w, h));

        let s = seg_scores(&pm, &tm).unwrap();
        if s.iou != iou
            || s.dice != dice
            || s.precision != precision
            || s.recall != recall
            || s.specificity != specificity
            || s.hausdorff_px != hd
        {
            fails.push(format!("pair {pairs}: {s:?} vs oracle ({iou},{dice},{precision:?},{recall},{specificity:?},{hd})"));
        }
        let identity = (s.dice - 2.0 * s.iou / (1.0 + s.iou)).abs();
        max_identity_err = max_identity_err.max(identity);
    }
    if max_identity_err > 1e-12 {
        fails.push(format!("Dice-IoU identity error {max_identity_err:e}"));
    }

    let block = |x0: u32| BinaryMask::from_fn(4, 4, move |x, y| (x0..x0 + 2).contains(&x) && y < 2);
    let f = seg_scores(&block(1), &block(0)).unwrap();
    let fixture_ok = (f.iou - 1.0 / 3.0).abs() < 1e-15
        && f.dice == 0.5
        && f.precision == Some(0.5)
        && f.recall == 0.5
        && (f.specificity.unwrap() - 10.0 / 12.0).abs() < 1e-15
        && f.hausdorff_px == 1.0;
    if !fixture_ok {
        fails.push(format!("4x4 fixture gave {f:?}"));
    }
    fails.truncate(10);
    check(
        "segmentation_metric_oracle",
        start,
        Duration::from_secs(5),
        &fails,
        format!(
            "1000 pairs exact, identity max err {max_identity_err:e}, fixture ({:.6},{},{:?},{},{:.6},{})",
            f.iou,
            f.dice,
            f.precision.unwrap_or(f64::NAN),
            f.recall,
            f.specificity.unwrap_or(f64::NAN),
            f.hausdorff_px
        ),
    );
}

// ---------------------------------------------------------------- max-flow

fn min_cut_oracle(n: usize, s: usize, t: usize, arcs: &[(usize, usize, u32)]) -> u64 {
    let inner: Vec<usize> = (0..n).filter(|&v| v != s && v != t).collect();
    let mut best = u64::MAX;
    for bits in 0u32..(1 << inner.len()) {
        let mut side = vec![false; n];
        side[s] = true;
        for (k, &v) in inner.iter().enumerate() {
            side[v] = bits >> k & 1 == 1;
        }
        let cap: u64 = arcs
            .iter()
            .filter(|&&(u, v, _)| side[u] && !side[v])
            .map(|&(_, _, c)| u64::from(c))
            .sum();
        best = best.min(cap);
    }
    best
}

#[test]
fn max_flow_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut nonzero = 0;
    for case in 0..500 {
        let inner = rng.gen_range(0..=8usize);
        let n = inner + 2;
        let (s, t) = (0, n - 1);
        let density: f64 = rng.gen_range(0.15..0.8);
        let mut arcs = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if u != v && rng.gen_bool(density) {
                    arcs.push((u, v, rng.gen_range(1..=10u32)));
                }
            }
        }
        let mut net = FlowNetwork::new(n, s, t);
        for &(u, v, c) in &arcs {
            net.add_arc(u, v, f64::from(c));
        }
        let want = min_cut_oracle(n, s, t, &arcs) as f64;
        let got = net.max_flow();
        let cut = net.cut_capacity(&got.source_side);
        nonzero += usize::from(want > 0.0);
        if got.value != want {
            fails.push(format!("case {case}: flow {} vs min cut {want}", got.value));
        }
        if cut != got.value || !got.source_side[s] || got.source_side[t] {
            fails.push(format!("case {case}: returned cut {cut} vs flow {}", got.value));
        }
    }

    let mut diamond = FlowNetwork::new(4, 0, 3);
    for (u, v, c) in [(0, 1, 3.0), (0, 2, 2.0), (1, 3, 2.0), (2, 3, 3.0), (1, 2, 1.0)] {
        diamond.add_arc(u, v, c);
    }
    let d = diamond.max_flow().value;
    if d != 5.0 {
        fails.push(format!("diamond gave {d}"));
    }
    fails.truncate(10);
    check(
        "max_flow_oracle",
        start,
        Duration::from_secs(10),
        &fails,
        format!("500 networks exact ({nonzero} with positive flow), duality on all, diamond={d}"),
    );
}

// ---------------------------------------------------------------- graph cut

#[test]
fn graph_cut_noisy_discs() {
    let _g = serial();
    let start = Instant::now();
    let mut fails = Vec::new();
    let params = GraphCutParams::default();
    let mut ious = Vec::new();
    let mut times = Vec::new();
    for i in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
        let (img, truth) = noisy_disc(&mut rng, 224, 40.0, 80.0, 170.0, 15.0);
        let t0 = Instant::now();
        let pred = segment_maxflow(&img, &params);
        times.push(t0.elapsed());
        match pred {
            Ok(pred) => ious.push(seg_scores(&pred, &BinaryMask::from_gray(&truth)).unwrap().iou),
            Err(e) => {
                fails.push(format!("disc {i}: {e}"));
                ious.push(0.0);
            }
        }
    }
    let good = ious.iter().filter(|&&v| v >= 0.90).count();
    let min_iou = ious.iter().copied().fold(f64::INFINITY, f64::min);
    let max_t = times.iter().max().copied().unwrap_or_default();
    let mean_t = times.iter().sum::<Duration>() / times.len() as u32;
    if good < 95 {
        fails.push(format!("only {good}/100 with IoU >= 0.90"));
    }
    if max_t > Duration::from_millis(350) {
        fails.push(format!("slowest image {:.1} ms", max_t.as_secs_f64() * 1e3));
    }
    fails.truncate(10);
    check(
        "graph_cut_noisy_discs",
        start,
        Duration::from_secs(60),
        &fails,
        format!(
            "{good}/100 IoU>=0.90 (min {min_iou:.4}), mean {:.1} ms, max {:.1} ms per 224x224 image",
            mean_t.as_secs_f64() * 1e3,
            max_t.as_secs_f64() * 1e3
        ),
    );
}

// ---------------------------------------------------------------- SSIM / GLCM

#[test]
fn ssim_and_glcm() {
    let _g = serial();
    let start = Instant::now();
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = GrayImage::from_fn(64, 48, |_, _| image::Luma([rng.gen()]));
    let self_sim = ssim(&a, &a).unwrap();
    if (self_sim - 1.0).abs() > 1e-12 {
        fails.push(format!("ssim(a,a)={self_sim}"));
    }
    let c100 = GrayImage::from_pixel(32, 32, image::Luma([100]));
    let c120 = GrayImage::from_pixel(32, 32, image::Luma([120]));
    let constant = ssim(&c100, &c120).unwrap();
    // Zero variance leaves only the luminance term.
    let closed = (2.0 * 100.0 * 120.0 + C1) / (100.0f64.powi(2) + 120.0f64.powi(2) + C1) * (C2 / C2);
    if (constant - closed).abs() > 1e-12 || (constant - 0.9836).abs() > 1e-3 {
        fails.push(format!("constant pair {constant} vs closed form {closed}"));
    }

    let flat = glcm_features(&c100, 64);
    if (flat.contrast, flat.energy, flat.homogeneity) != (0.0, 1.0, 1.0) {
        fails.push(format!("constant GLCM {flat:?}"));
    }

    // 4×4 columns alternating 0/255, two levels, four angles pooled.
    // Ordered pairs: horizontal 12 and both diagonals 9 each all cross the
    // stripes; vertical 12 stay within one. Symmetric entries: 60 off the
    // diagonal, 24 on it, so p01 = p10 = 5/14 and p00 = p11 = 1/7.
    let stripes = GrayImage::from_fn(4, 4, |x, _| image::Luma([if x % 2 == 0 { 0 } else { 255 }]));
    let g = glcm_features_with(&stripes, 2, 1, &GLCM_ANGLES);
    let want = [5.0 / 7.0, 29.0 / 98.0, 9.0 / 14.0, -3.0 / 7.0];
    let got = g.to_array();
    if got.iter().zip(want).any(|(g, w)| (g - w).abs() > 1e-12) {
        fails.push(format!("stripes {got:?} vs {want:?}"));
    }
    check(
        "ssim_and_glcm",
        start,
        Duration::from_secs(2),
        &fails,
        format!("ssim(a,a)={self_sim}, constant={constant:.10}, flat GLCM {:?}, stripes {got:?}", flat.to_array()),
    );
}

// ---------------------------------------------------------------- AUC

#[test]
fn auc_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut max_err = 0.0f64;
    let mut scored = 0;
    for case in 0..10_000 {
        let n = rng.gen_range(1..=12);
        let coarse = rng.gen_bool(0.5);
        let samples: Vec<(f64, bool)> = (0..n)
            .map(|_| {
                let s = if coarse { f64::from(rng.gen_range(0..5u8)) / 4.0 } else { rng.gen_range(0.0..1.0) };
                (s, rng.gen_bool(0.5))
            })
            .collect();
        let pos: Vec<f64> = samples.iter().filter(|s| s.1).map(|s| s.0).collect();
        let neg: Vec<f64> = samples.iter().filter(|s| !s.1).map(|s| s.0).collect();
        let result = auc(&samples);
        if pos.is_empty() || neg.is_empty() {
            if !matches!(result, Err(MetricsError::SingleClass)) {
                fails.push(format!("case {case}: single class gave {result:?}"));
            }
            continue;
        }
        // Twice the concordance count keeps the oracle in integers.
        let twice: usize = pos
            .iter()
            .flat_map(|p| neg.iter().map(move |q| if p > q { 2 } else if p == q { 1 } else { 0 }))
            .sum();
        let want = twice as f64 / (2 * pos.len() * neg.len()) as f64;
        match result {
            Ok(got) => {
                let err = (got - want).abs();
                max_err = max_err.max(err);
                if err > 1e-12 {
                    fails.push(format!("case {case}: {got} vs {want}"));
                }
            }
            Err(e) => fails.push(format!("case {case}: {e}")),
        }
        scored += 1;
    }
    let fixture = auc(&[(0.9, true), (0.8, false), (0.3, true), (0.1, false)]).unwrap();
    if fixture != 0.75 {
        fails.push(format!("fixture gave {fixture}"));
    }
    fails.truncate(10);
    check(
        "auc_oracle",
        start,
        Duration::from_secs(10),
        &fails,
        format!("{scored} two-class lists match pairwise concordance (max err {max_err:e}), fixture={fixture}"),
    );
}

// ---------------------------------------------------------------- split

fn random_manifest(rng: &mut ChaCha8Rng) -> Manifest {
    let patients = rng.gen_range(1..=500);
    let mut records = Vec::new();
    for p in 0..patients {
        let images = rng.gen_range(1..=6);
        let superclass = if rng.gen_bool(0.3) { Superclass::Melanocytic } else { Superclass::NonMelanocytic };
        let fitzpatrick = Fitzpatrick::ALL[rng.gen_range(0..Fitzpatrick::ALL.len())];
        for i in 0..images {
            records.push(ImageRecord {
                image_id: format!("img{p}_{i}"),
                path: PathBuf::from(format!("img{p}_{i}.jpg")),
                diagnosis: "x".into(),
                superclass,
                patient_id: format!("pt{p:04}"),
                source: Source::Real,
                ita_degrees: None,
                fitzpatrick: Some(fitzpatrick),
                split: None,
            });
        }
    }
    Manifest::new(records).unwrap()
}

fn tone_group(f: Option<Fitzpatrick>) -> &'static str {
    match f {
        Some(f) if f.is_dark() => "dark",
        Some(Fitzpatrick::Uncertain) | None => "uncertain",
        Some(_) => "light",
    }
}

#[test]
fn split_invariants() {
    let _g = serial();
    let start = Instant::now();
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut worst_slack = f64::INFINITY;
    let mut total_images = 0;
    for case in 0..200 {
        let m = random_manifest(&mut rng);
        total_images += m.len();
        let spec = SplitSpec {
            seed: rng.gen(),
            ..SplitSpec::default()
        };
        let (out, _) = split(&m, &spec).unwrap();

        let mut patient_split: HashMap<&str, Split> = HashMap::new();
        for r in out.records() {
            let Some(s) = r.split else {
                fails.push(format!("case {case}: {} unassigned", r.image_id));
                continue;
            };
            if let Some(prev) = patient_split.insert(&r.patient_id, s) {
                if prev != s {
                    fails.push(format!("case {case}: patient {} leaks", r.patient_id));
                }
            }
        }

        // Patients are homogeneous, so each one's stratum is its records' keys.
        let mut strata: BTreeMap<(Superclass, &str), ([usize; 3], usize, HashMap<&str, usize>)> = BTreeMap::new();
        for r in out.records() {
            let e = strata.entry((r.superclass, tone_group(r.fitzpatrick))).or_default();
            if let Some(s) = r.split {
                e.0[s.index()] += 1;
            }
            e.1 += 1;
            *e.2.entry(&r.patient_id).or_default() += 1;
        }
        for (key, (assigned, total, per_patient)) in &strata {
            let max_patient = *per_patient.values().max().unwrap() as f64;
            for k in 0..3 {
                let dev = (assigned[k] as f64 - spec.fractions[k] * *total as f64).abs();
                worst_slack = worst_slack.min(max_patient - dev);
                if dev > max_patient + 1e-9 {
                    fails.push(format!("case {case} {key:?}: split {k} off by {dev} > {max_patient}"));
                }
            }
        }

        let bytes = |m: &Manifest| {
            let mut buf = Vec::new();
            m.write_csv(&mut buf, &[]).unwrap();
            buf
        };
        let again = split(&m, &spec).unwrap().0;
        if bytes(&out) != bytes(&again) {
            fails.push(format!("case {case}: rerun differs"));
        }
    }
    fails.truncate(10);
    check(
        "split_invariants",
        start,
        Duration::from_secs(10),
        &fails,
        format!("200 manifests ({total_images} images): no leakage, min slack to patient bound {worst_slack:.2}, byte-identical reruns"),
    );
}

// ---------------------------------------------------------------- pipeline smoke

fn run(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dermfair"))
        .args(args.iter().map(|a| a.as_ref()))
        .env("DERMFAIR_THREADS", "2")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!(
            "exit {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

/// Header and rows of a CSV whose comment lines start with `#`.
fn table(path: &Path) -> Result<(Vec<String>, Vec<HashMap<String, String>>), String> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let header: Vec<String> = rdr.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        rows.push(header.iter().cloned().zip(rec.iter().map(String::from)).collect());
    }
    Ok((header, rows))
}

fn expect_header(path: &Path, want: &[&str]) -> Result<Vec<HashMap<String, String>>, String> {
    let (header, rows) = table(path)?;
    if header != want {
        return Err(format!("{}: header {header:?}, expected {want:?}", path.display()));
    }
    Ok(rows)
}

fn comment_value(path: &Path, key: &str) -> Option<String> {
    std::fs::read_to_string(path).ok()?.lines().find_map(|l| {
        l.strip_prefix("# ")
            .and_then(|kv| kv.split_once('='))
            .filter(|(k, _)| *k == key)
            .map(|(_, v)| v.to_string())
    })
}

fn json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn unit_interval(rows: &[HashMap<String, String>], cols: &[&str]) -> Result<(), String> {
    for r in rows {
        for c in cols {
            let v: f64 = r[*c].parse().map_err(|_| format!("{c}={:?} is not numeric", r[*c]))?;
            ensure((0.0..=1.0).contains(&v), || format!("{c}={v} outside [0,1]"))?;
        }
    }
    Ok(())
}

const MANIFEST_COLUMNS: [&str; 9] = [
    "image_id",
    "path",
    "diagnosis",
    "superclass",
    "patient_id",
    "source",
    "ita_degrees",
    "fitzpatrick",
    "split",
];

fn pipeline(root: &Path, stages: &mut Vec<String>) -> Result<(), String> {
    let corpus = root.join("corpus");
    let p = |rel: &str| root.join(rel);

    run(&[&"fixtures", &"--out", &corpus, &"--seed", &"42"])?;
    stages.push("fixtures".into());

    run(&[&"ingest", &"--metadata", &corpus.join("metadata.csv"), &"--images", &corpus.join("images"), &"--out", &p("m.csv")])?;
    let rows = expect_header(&p("m.csv"), &MANIFEST_COLUMNS)?;
    ensure(rows.len() == fixtures::REAL_IMAGES, || format!("ingest kept {} rows", rows.len()))?;
    ensure(rows.iter().all(|r| !r["patient_id"].is_empty()), || "blank patient id".into())?;
    stages.push("ingest".into());

    run(&[&"audit", &"--manifest", &p("m.csv"), &"--out", &p("audit")])?;
    let rows = expect_header(&p("audit/audit.csv"), &["fst", "melanocytic", "non_melanocytic", "total"])?;
    let total = rows.iter().find(|r| r["fst"] == "Total").ok_or("no Total row")?;
    ensure(total["total"] == fixtures::REAL_IMAGES.to_string(), || format!("audit total {}", total["total"]))?;
    let aj = json(&p("audit/audit.json"))?;
    let dark = aj["dark_count"].as_u64().ok_or("dark_count missing")?;
    ensure(dark == fixtures::DARK_REAL_IMAGES as u64, || format!("dark_count {dark}"))?;
    let per_image = expect_header(
        &p("audit/audit_images.csv"),
        &["image_id", "superclass", "fitzpatrick", "ita_degrees", "skin_pixel_count", "blue_shifted", "error"],
    )?;
    ensure(per_image.len() == fixtures::REAL_IMAGES, || "audit_images row count".into())?;
    let annotated = expect_header(&p("audit/manifest.csv"), &MANIFEST_COLUMNS)?;
    ensure(annotated.iter().all(|r| !r["fitzpatrick"].is_empty()), || "unannotated record".into())?;
    stages.push(format!("audit(dark={dark})"));

    run(&[&"validate-synth", &"--real-manifest", &p("audit/manifest.csv"), &"--synth-dir", &corpus.join("synthetic"), &"--out", &p("synth.csv")])?;
    let rows = expect_header(
        &p("synth.csv"),
        &[
            "image_id", "hist_d_r", "hist_d_g", "hist_d_b", "ssim_max", "glcm_contrast", "glcm_energy",
            "glcm_homogeneity", "glcm_correlation", "z_contrast", "z_energy", "z_homogeneity", "z_correlation",
            "verdict", "reasons",
        ],
    )?;
    ensure(rows.len() == fixtures::SYNTHETIC_IMAGES, || format!("report has {} rows", rows.len()))?;
    let accepted = rows.iter().filter(|r| r["verdict"] == "accept").count();
    ensure(rows.iter().all(|r| r["verdict"] == "accept" || r["verdict"] == "reject"), || "bad verdict".into())?;
    for r in &rows {
        let s: f64 = r["ssim_max"].parse().map_err(|_| "ssim_max not numeric")?;
        ensure((-1.0..=1.0).contains(&s), || format!("ssim_max {s}"))?;
        ensure((r["verdict"] == "reject") == !r["reasons"].is_empty(), || "reasons/verdict mismatch".into())?;
    }
    for i in 0..fixtures::SYNTHETIC_OUTLIERS {
        let id = fixtures::synthetic_id(i);
        ensure(rows.iter().any(|r| r["image_id"] == id && r["verdict"] == "reject"), || format!("outlier {id} accepted"))?;
    }
    let pre = comment_value(&p("synth.csv"), "candidates_pre_filter");
    ensure(pre.as_deref() == Some("16"), || format!("candidates_pre_filter={pre:?}"))?;
    stages.push(format!("validate-synth({accepted}/{} accepted)", rows.len()));

    run(&[&"integrate", &"--manifest", &p("audit/manifest.csv"), &"--synth-dir", &corpus.join("synthetic"), &"--report", &p("synth.csv"), &"--out", &p("merged.csv")])?;
    let rows = expect_header(&p("merged.csv"), &MANIFEST_COLUMNS)?;
    ensure(rows.len() == fixtures::REAL_IMAGES + accepted, || format!("merged has {} rows", rows.len()))?;
    ensure(
        rows.iter().filter(|r| r["source"] == "synthetic").all(|r| r["patient_id"].starts_with("synth-")),
        || "synthetic pseudo-patient prefix".into(),
    )?;
    stages.push(format!("integrate({})", rows.len()));

    run(&[&"split", &"--manifest", &p("merged.csv"), &"--out", &p("split.csv"), &"--seed", &"7"])?;
    let rows = expect_header(&p("split.csv"), &MANIFEST_COLUMNS)?;
    let mut by_patient: HashMap<&str, &str> = HashMap::new();
    for r in &rows {
        ensure(["train", "val", "test"].contains(&r["split"].as_str()), || format!("split {:?}", r["split"]))?;
        let prev = by_patient.insert(&r["patient_id"], &r["split"]);
        ensure(prev.map_or(true, |s| s == r["split"]), || format!("patient {} leaks", r["patient_id"]))?;
    }
    let test_real: Vec<&str> = rows
        .iter()
        .filter(|r| r["split"] == "test" && r["source"] == "real")
        .map(|r| r["image_id"].as_str())
        .collect();
    stages.push("split".into());

    run(&[&"segment", &"--manifest", &p("split.csv"), &"--out", &p("seg")])?;
    let log = expect_header(&p("seg/segment_log.csv"), &["image_id", "status", "lesion_pixels"])?;
    ensure(log.len() == fixtures::REAL_IMAGES, || format!("segment log has {} rows", log.len()))?;
    for i in 0..fixtures::REAL_IMAGES {
        let id = fixtures::real_id(i);
        let mask = image_io::load_gray(&p(&format!("seg/{id}.png"))).map_err(|e| e.to_string())?;
        let src = image_io::load_rgb(&corpus.join(format!("images/{id}.png"))).map_err(|e| e.to_string())?;
        ensure(mask.dimensions() == src.dimensions(), || format!("{id} mask size"))?;
        ensure(mask.pixels().all(|v| v.0[0] == 0 || v.0[0] == 255), || format!("{id} mask not binary"))?;
    }
    stages.push("segment".into());

    run(&[&"eval-seg", &"--pred", &p("seg"), &"--truth", &corpus.join("masks"), &"--manifest", &p("split.csv"), &"--out", &p("evalseg")])?;
    let per = expect_header(
        &p("evalseg/seg_per_image.csv"),
        &["image_id", "iou", "dice", "precision", "recall", "specificity", "hausdorff_px"],
    )?;
    ensure(per.len() == fixtures::REAL_IMAGES, || format!("{} per-image rows", per.len()))?;
    unit_interval(&per, &["iou", "dice", "recall"])?;
    let summary = expect_header(&p("evalseg/seg_summary.csv"), &["metric", "value", "images"])?;
    let metrics: HashSet<&str> = summary.iter().map(|r| r["metric"].as_str()).collect();
    for m in ["mean_iou", "dice", "precision", "recall", "specificity", "hausdorff_px"] {
        ensure(metrics.contains(m), || format!("summary lacks {m}"))?;
    }
    let sj = json(&p("evalseg/seg_report.json"))?;
    let mean_iou = sj["report"]["means"]["mean_iou"].as_f64().ok_or("mean_iou missing")?;
    stages.push(format!("eval-seg(mean IoU {mean_iou:.3})"));

    run(&[&"eval-cls", &"--predictions", &corpus.join("predictions.csv"), &"--manifest", &p("split.csv"), &"--split", &"test", &"--real-only", &"--out", &p("evalcls")])?;
    let rows = expect_header(&p("evalcls/cls_summary.csv"), &["metric", "value"])?;
    let names: HashSet<&str> = rows.iter().map(|r| r["metric"].as_str()).collect();
    for m in ["accuracy", "auc", "precision", "recall", "f1", "loss", "tp", "fp", "tn", "fn"] {
        ensure(names.contains(m), || format!("cls summary lacks {m}"))?;
    }
    let cj = json(&p("evalcls/cls_report.json"))?;
    let n = cj["report"]["scores"]["n"].as_u64().ok_or("n missing")?;
    ensure(n as usize == test_real.len(), || format!("scored {n}, test split has {}", test_real.len()))?;
    stages.push(format!("eval-cls(n={n})"));

    run(&[&"report", &"--log", &corpus.join("training_log.csv"), &"--out", &p("rep")])?;
    let series = expect_header(&p("rep/training_series.csv"), &["epoch", "panel", "series", "value"])?;
    ensure(series.len() == 10 * 5, || format!("{} tidy rows", series.len()))?;
    for svg in ["loss", "accuracy", "auc"] {
        let text = std::fs::read_to_string(p(&format!("rep/{svg}.svg"))).map_err(|e| e.to_string())?;
        ensure(text.contains("<svg") && text.trim_end().ends_with("</svg>"), || format!("{svg}.svg malformed"))?;
    }
    let best = json(&p("rep/training_summary.json"))?["best_auc_epoch"].as_u64();
    ensure(best == Some(10), || format!("best_auc_epoch {best:?}"))?;
    stages.push("report".into());

    run(&[&"preprocess", &"--manifest", &p("split.csv"), &"--out", &p("pre"), &"--augment-copies", &"1"])?;
    let excluded = expect_header(&p("pre/excluded.csv"), &["image_id", "reason"])?;
    let split_rows = table(&p("split.csv"))?.1;
    let mut processed = 0;
    let mut augmented = 0;
    for r in &split_rows {
        let id = &r["image_id"];
        if excluded.iter().any(|e| &e["image_id"] == id) {
            continue;
        }
        let img = image_io::load_rgb(&p(&format!("pre/{id}.png"))).map_err(|e| e.to_string())?;
        ensure(img.dimensions() == (224, 224), || format!("{id} preprocessed to {:?}", img.dimensions()))?;
        processed += 1;
        if r["split"] == "train" {
            let aug = image_io::load_rgb(&p(&format!("pre/augmented/{id}_aug0.png"))).map_err(|e| e.to_string())?;
            ensure(aug.dimensions() == (224, 224), || format!("{id} augmented size"))?;
            augmented += 1;
        }
    }
    json(&p("pre/preprocess_config.json"))?;
    stages.push(format!("preprocess({processed} images, {augmented} augmented, {} excluded)", excluded.len()));
    Ok(())
}

#[test]
fn pipeline_smoke() {
    let _g = serial();
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut stages = Vec::new();
    let fails: Vec<String> = match pipeline(dir.path(), &mut stages) {
        Ok(()) => Vec::new(),
        Err(e) => vec![format!("after [{}]: {e}", stages.join(", "))],
    };
    check("pipeline_smoke", start, Duration::from_secs(120), &fails, stages.join(" -> "));
}

// ---------------------------------------------------------------- dataset-gated

/// Runs against a local ISIC copy when `DERMFAIR_ISIC_METADATA` and
/// `DERMFAIR_ISIC_IMAGES` are set (plus `DERMFAIR_ISIC_MASKS` for the
/// segmentation part); otherwise reports SKIP.
#[test]
fn isic_dataset_gated() {
    let _g = serial();
    let start = Instant::now();
    let (Some(meta), Some(images)) = (
        std::env::var_os("DERMFAIR_ISIC_METADATA"),
        std::env::var_os("DERMFAIR_ISIC_IMAGES"),
    ) else {
        report(
            "isic_dataset_gated",
            true,
            start.elapsed(),
            "SKIP: DERMFAIR_ISIC_METADATA / DERMFAIR_ISIC_IMAGES not set, no local dataset",
        );
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let p = |rel: &str| dir.path().join(rel);
    let mut fails = Vec::new();
    let mut detail = Vec::new();
    let outcome = (|| -> Result<(), String> {
        run(&[&"ingest", &"--metadata", &meta, &"--images", &images, &"--out", &p("m.csv")])?;
        let rows = table(&p("m.csv"))?.1;
        let mel = rows.iter().filter(|r| r["superclass"] == "melanocytic").count();
        let non = rows.iter().filter(|r| r["superclass"] == "non_melanocytic").count();
        detail.push(format!("melanocytic={mel} non_melanocytic={non}"));
        if (mel, non) != (3165, 14563) {
            fails.push(format!("superclass totals {mel}/{non}, expected 3165/14563"));
        }
        run(&[&"audit", &"--manifest", &p("m.csv"), &"--out", &p("audit")])?;
        let share = json(&p("audit/audit.json"))?["dark_share"].as_f64().ok_or("dark_share missing")?;
        detail.push(format!("V+VI share {:.2}%", share * 100.0));
        if (share - 0.0794).abs() > 0.015 {
            fails.push(format!("V+VI share {share:.4} outside 0.0794 +/- 0.015"));
        }
        if let Some(masks) = std::env::var_os("DERMFAIR_ISIC_MASKS") {
            let masks = PathBuf::from(masks);
            let ids: Vec<String> = rows
                .iter()
                .map(|r| r["image_id"].clone())
                .filter(|id| dermfair_core::metrics::find_truth_mask(&masks, id).is_some())
                .collect();
            let subset = Manifest::load(&p("m.csv"))
                .map_err(|e| e.to_string())?
                .filtered(|r| ids.contains(&r.image_id));
            subset.save(&p("masked.csv"), &[]).map_err(|e| e.to_string())?;
            run(&[&"segment", &"--manifest", &p("masked.csv"), &"--out", &p("seg")])?;
            run(&[&"eval-seg", &"--pred", &p("seg"), &"--truth", &masks, &"--manifest", &p("masked.csv"), &"--out", &p("evalseg")])?;
            let iou = json(&p("evalseg/seg_report.json"))?["report"]["means"]["mean_iou"]
                .as_f64()
                .ok_or("mean_iou missing")?;
            detail.push(format!("max-flow mean IoU {iou:.3} over {} images", ids.len()));
            if (iou - 0.75).abs() > 0.08 {
                fails.push(format!("mean IoU {iou:.3} outside 0.75 +/- 0.08"));
            }
        } else {
            detail.push("segmentation part skipped: DERMFAIR_ISIC_MASKS not set".into());
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        fails.push(e);
    }
    check("isic_dataset_gated", start, Duration::MAX, &fails, detail.join(", "));
}
