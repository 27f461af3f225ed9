//! Seeded synthetic corpus generation.
//!
//! A bag-of-tokens mixture: each report draws tokens from its class
//! signature vocabulary with probability `signature_strength`, otherwise
//! from the shared vocabulary. Confusable pairs make a fraction of each
//! class's reports draw signature tokens from the *union* of the two
//! classes' signatures, which concentrates the downstream model's confusion
//! mass on that pair.

use super::Report;
use crate::error::{Error, Result};
use crate::nncore::Rng;

/// One synthetic class: its code, signature tokens and signature strength.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub code: String,
    pub signature_vocab: Vec<String>,
    pub signature_strength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: Vec<ClassSpec>,
    pub shared_vocabulary: Vec<String>,
    pub reports_per_class: usize,
    /// Inclusive token-count range per report.
    pub tokens_per_report: (usize, usize),
    /// `(code_a, code_b, overlap)`: the leading `overlap` fraction of each
    /// class's reports also draws from the partner's signature.
    pub confusable_pairs: Vec<(String, String, f64)>,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Uniform spec: per-class signatures and the shared vocabulary are
    /// deterministic letter-only token streams (the tokenizer drops digits,
    /// so tokens must survive cleaning).
    pub fn uniform(
        codes: &[String],
        signature_size: usize,
        shared_size: usize,
        signature_strength: f64,
        reports_per_class: usize,
        tokens_per_report: (usize, usize),
        confusable_pairs: Vec<(String, String, f64)>,
        seed: u64,
    ) -> Self {
        let classes = codes
            .iter()
            .enumerate()
            .map(|(c, code)| ClassSpec {
                code: code.clone(),
                signature_vocab: (0..signature_size)
                    .map(|j| format!("sig{}{}", letters(c), letters(j)))
                    .collect(),
                signature_strength,
            })
            .collect();
        SyntheticSpec {
            classes,
            shared_vocabulary: (0..shared_size).map(|j| format!("com{}", letters(j))).collect(),
            reports_per_class,
            tokens_per_report,
            confusable_pairs,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::invalid("synthetic spec has no classes"));
        }
        if self.reports_per_class == 0 {
            return Err(Error::invalid("reports_per_class must be at least 1"));
        }
        let (lo, hi) = self.tokens_per_report;
        if lo == 0 || lo > hi {
            return Err(Error::invalid(format!(
                "tokens_per_report range {lo}..={hi} is invalid"
            )));
        }
        if self.shared_vocabulary.is_empty() {
            return Err(Error::invalid("shared vocabulary is empty"));
        }
        for c in &self.classes {
            if c.signature_vocab.is_empty() {
                return Err(Error::invalid(format!("class {} has an empty signature", c.code)));
            }
            if !(0.0..=1.0).contains(&c.signature_strength) {
                return Err(Error::invalid(format!(
                    "class {} signature strength {} not in [0, 1]",
                    c.code, c.signature_strength
                )));
            }
        }
        for (a, b, f) in &self.confusable_pairs {
            if !(0.0..=1.0).contains(f) {
                return Err(Error::invalid(format!(
                    "confusable pair ({a}, {b}) overlap {f} not in [0, 1]"
                )));
            }
            for code in [a, b] {
                if !self.classes.iter().any(|c| &c.code == code) {
                    return Err(Error::invalid(format!(
                        "confusable pair names unknown class {code}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Lowercase base-26 rendering, zero-padded to three letters.
fn letters(mut n: usize) -> String {
    let mut s = [b'a'; 3];
    for slot in s.iter_mut().rev() {
        *slot = b'a' + (n % 26) as u8;
        n /= 26;
    }
    String::from_utf8_lossy(&s).into_owned()
}

/// Partner signature for report index `r` of class `code`, if any.
/// Pairs claim consecutive index ranges in declaration order, so a class in
/// several pairs hands disjoint report slices to each partner.
fn partner_for<'a>(
    spec: &'a SyntheticSpec,
    code: &str,
    r: usize,
) -> Option<&'a str> {
    let n = spec.reports_per_class as f64;
    let mut start = 0usize;
    for (a, b, f) in &spec.confusable_pairs {
        let other = if a == code {
            Some(b.as_str())
        } else if b == code {
            Some(a.as_str())
        } else {
            None
        };
        if let Some(other) = other {
            let take = (f * n).round() as usize;
            if r >= start && r < start + take {
                return Some(other);
            }
            start += take;
        }
    }
    None
}

/// Generate `reports_per_class` reports per class, deterministically per seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<Report>> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let (lo, hi) = spec.tokens_per_report;
    let mut out = Vec::with_capacity(spec.classes.len() * spec.reports_per_class);
    for class in &spec.classes {
        for r in 0..spec.reports_per_class {
            let partner = partner_for(spec, &class.code, r);
            let pool: Vec<&str> = match partner {
                None => class.signature_vocab.iter().map(String::as_str).collect(),
                Some(other) => {
                    let partner_vocab = &spec
                        .classes
                        .iter()
                        .find(|c| c.code == other)
                        .expect("validated")
                        .signature_vocab;
                    class
                        .signature_vocab
                        .iter()
                        .chain(partner_vocab)
                        .map(String::as_str)
                        .collect()
                }
            };
            let count = lo + rng.next_below((hi - lo + 1) as u64) as usize;
            let mut words = Vec::with_capacity(count);
            for _ in 0..count {
                if rng.next_f64() < class.signature_strength {
                    words.push(pool[rng.next_below(pool.len() as u64) as usize]);
                } else {
                    let shared = &spec.shared_vocabulary;
                    words.push(shared[rng.next_below(shared.len() as u64) as usize].as_str());
                }
            }
            out.push(Report {
                id: format!("{}-{r:04}", class.code),
                text: words.join(" "),
                label: Some(class.code.clone()),
            });
        }
    }
    Ok(out)
}
