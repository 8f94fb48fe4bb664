//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;

/// One row of a product-limit table computed by direct risk-set counting.
#[derive(Debug, Clone, PartialEq)]
pub struct KmRow {
    pub time: u32,
    pub at_risk: usize,
    pub events: usize,
    pub censored: usize,
    pub survival: f64,
    pub variance: f64,
    pub cumulative_hazard: f64,
}

pub fn km_oracle(subjects: &[(u32, bool)]) -> Vec<KmRow> {
    let mut times: Vec<u32> = subjects.iter().map(|s| s.0).collect();
    times.sort_unstable();
    times.dedup();
    let mut rows = Vec::new();
    let mut s = 1.0;
    let mut gw = 0.0;
    let mut h = 0.0;
    for t in times {
        let n = subjects.iter().filter(|x| x.0 >= t).count();
        let d = subjects.iter().filter(|x| x.0 == t && x.1).count();
        let c = subjects.iter().filter(|x| x.0 == t && !x.1).count();
        let (nf, df) = (n as f64, d as f64);
        s *= 1.0 - df / nf;
        if d > 0 && n > d {
            gw += df / (nf * (nf - df));
        }
        h += df / nf;
        rows.push(KmRow {
            time: t,
            at_risk: n,
            events: d,
            censored: c,
            survival: s,
            variance: if s > 0.0 { s * s * gw } else { 0.0 },
            cumulative_hazard: h,
        });
    }
    rows
}

/// Random `(time, observed)` pairs with times in `1..=max_time`.
pub fn random_cohort(rng: &mut impl Rng, n: usize, max_time: u32, censor_prob: f64) -> Vec<(u32, bool)> {
    (0..n)
        .map(|_| (rng.random_range(1..=max_time), !rng.random_bool(censor_prob)))
        .collect()
}

/// Breslow partial log-likelihood written out term by term.
pub fn breslow_loglik(subjects: &[(u32, bool, Vec<f64>)], beta: &[f64]) -> f64 {
    let eta = |x: &[f64]| x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
    let mut ll = 0.0;
    for (t, obs, x) in subjects {
        if !obs {
            continue;
        }
        let denom: f64 = subjects
            .iter()
            .filter(|(u, _, _)| u >= t)
            .map(|(_, _, y)| eta(y).exp())
            .sum();
        ll += eta(x) - denom.ln();
    }
    ll
}

/// Efron partial log-likelihood written out term by term.
pub fn efron_loglik(subjects: &[(u32, bool, Vec<f64>)], beta: &[f64]) -> f64 {
    let eta = |x: &[f64]| x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
    let mut times: Vec<u32> = subjects.iter().filter(|s| s.1).map(|s| s.0).collect();
    times.sort_unstable();
    times.dedup();
    let mut ll = 0.0;
    for t in times {
        let risk: f64 = subjects.iter().filter(|s| s.0 >= t).map(|s| eta(&s.2).exp()).sum();
        let tied: Vec<f64> = subjects
            .iter()
            .filter(|s| s.0 == t && s.1)
            .map(|s| eta(&s.2))
            .collect();
        let tied_risk: f64 = tied.iter().map(|e| e.exp()).sum();
        let d = tied.len() as f64;
        for (l, e) in tied.iter().enumerate() {
            ll += e - (risk - l as f64 / d * tied_risk).ln();
        }
    }
    ll
}

/// Maximizer of a concave function on `[lo, hi]` by golden-section search.
pub fn golden_max(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        }
    }
    (lo + hi) / 2.0
}

/// Maximizer of a concave function of one or two variables: a coarse grid
/// followed by coordinate-wise golden-section refinement.
pub fn grid_argmax(f: impl Fn(&[f64]) -> f64, dim: usize, bound: f64) -> Vec<f64> {
    let steps = 80;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| -bound + 2.0 * bound * i as f64 / steps as f64)
        .collect();
    let mut best = vec![0.0; dim];
    let mut best_val = f64::NEG_INFINITY;
    if dim == 1 {
        for &a in &grid {
            let v = f(&[a]);
            if v > best_val {
                best_val = v;
                best = vec![a];
            }
        }
    } else {
        for &a in &grid {
            for &b in &grid {
                let v = f(&[a, b]);
                if v > best_val {
                    best_val = v;
                    best = vec![a, b];
                }
            }
        }
    }
    let cell = 2.0 * bound / steps as f64;
    let mut width = 2.0 * cell;
    for _ in 0..2000 {
        let before = best.clone();
        for j in 0..dim {
            let mut probe = best.clone();
            best[j] = golden_max(
                |v| {
                    probe[j] = v;
                    f(&probe)
                },
                best[j] - width,
                best[j] + width,
                1e-12,
            );
        }
        let moved = best.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if moved < 1e-11 {
            break;
        }
        width = (moved * 4.0).max(1e-6);
    }
    best
}

/// Concordance by enumerating every ordered pair.
pub fn concordance_oracle(times: &[u32], observed: &[bool], risk: &[f64]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..times.len() {
        if !observed[i] {
            continue;
        }
        for j in 0..times.len() {
            if times[j] > times[i] {
                den += 1.0;
                if risk[i] > risk[j] {
                    num += 1.0;
                } else if risk[i] == risk[j] {
                    num += 0.5;
                }
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Upper tail of the chi-square distribution by Simpson integration of the density.
pub fn chi2_sf_numeric(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let k = df as f64 / 2.0;
    let ln_norm = k * 2f64.ln() + ln_gamma_lanczos(k);
    // t = u^2 removes the df = 1 singularity at 0: the integrand is 2 u^(df-1) e^(-u^2/2) / norm
    let integrand = |u: f64| {
        if u == 0.0 {
            return if df == 1 { 2.0 * (-ln_norm).exp() } else { 0.0 };
        }
        2.0 * ((df as f64 - 1.0) * u.ln() - u * u / 2.0 - ln_norm).exp()
    };
    let upper = x.sqrt();
    let n = 200_000;
    let h = upper / n as f64;
    let mut acc = integrand(0.0) + integrand(upper);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(i as f64 * h);
    }
    1.0 - acc * h / 3.0
}

fn ln_gamma_lanczos(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Scripted completion backend: for term `i` the greedy answer is correct when
/// `greedy_correct(i)` and exactly `hits(i)` of the sampled answers are correct.
pub struct ScriptedBackend {
    pub terms: Vec<factsurv::datamodel::TermRecord>,
    pub greedy_correct: fn(usize) -> bool,
    pub hits: fn(usize) -> u32,
    pub requests: std::sync::atomic::AtomicUsize,
    pub per_prompt: std::sync::Mutex<std::collections::HashMap<String, usize>>,
}

impl ScriptedBackend {
    pub fn new(
        terms: Vec<factsurv::datamodel::TermRecord>,
        greedy_correct: fn(usize) -> bool,
        hits: fn(usize) -> u32,
    ) -> Self {
        Self {
            terms,
            greedy_correct,
            hits,
            requests: Default::default(),
            per_prompt: Default::default(),
        }
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(std::sync::atomic::Ordering::SeqCst)
    }
}

impl factsurv::probe::CompletionBackend for ScriptedBackend {
    fn complete(
        &self,
        request: &factsurv::probe::CompletionRequest,
    ) -> Result<String, factsurv::probe::BackendError> {
        self.requests.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        let (i, term) = self
            .terms
            .iter()
            .enumerate()
            .find(|(_, t)| request.prompt.contains(&t.label))
            .ok_or_else(|| factsurv::probe::BackendError::fatal("unknown prompt"))?;
        if request.temperature == 0.0 {
            return Ok(if (self.greedy_correct)(i) {
                format!("The identifier is {}.", term.identifier)
            } else {
                "I am not sure.".to_string()
            });
        }
        let mut seen = self.per_prompt.lock().unwrap();
        let k = seen.entry(request.prompt.clone()).or_insert(0);
        let hit = (*k as u32) < (self.hits)(i);
        *k += 1;
        Ok(if hit {
            term.identifier.clone()
        } else {
            "HP:0000000".to_string()
        })
    }
}

/// HPO terms whose labels do not contain one another.
pub fn probe_terms(n: usize) -> Vec<factsurv::datamodel::TermRecord> {
    (0..n)
        .map(|i| factsurv::datamodel::TermRecord {
            term_id: format!("t{i}"),
            label: format!("phenotype-{i:04}-x"),
            identifier: format!("HP:{:07}", 1000 + i),
            ontology: factsurv::datamodel::Ontology::Hpo,
            split: factsurv::datamodel::Split::Seen,
        })
        .collect()
}
