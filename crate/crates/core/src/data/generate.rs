//! Synthetic MWR exam generator.
//!
//! Stands in for the private clinical dataset. Healthy physiology is
//! modelled as per-mode baselines plus a shared per-case body-temperature
//! offset, a per-site left/right physiological jitter (shared by the skin
//! and internal readings of a site), and independent instrument noise per
//! reading. Cancerous cases add one internal hotspot on a random side and
//! point 0-8, spilling half its amplitude to the two ring-adjacent points,
//! with the skin reading elevated by a coupling factor. A hotspot at the
//! nipple (point 0) has no ring neighbors and does not spill.
//!
//! All parameters are configuration, not ground truth. Generation is a pure
//! function of the config (including its seed).

use serde::{Deserialize, Serialize};

use crate::data::{internal_index, skin_index, Dataset, Label, MwrExam, Side, FEATURES};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_cases: usize,
    /// Fraction of cancerous cases; the default matches the 548 / 4932
    /// clinical class balance.
    pub positive_fraction: f64,
    pub skin_baseline: f64,
    pub internal_baseline: f64,
    /// Std of the shared per-case body-temperature offset.
    pub case_offset_sigma: f64,
    /// Std of the per-site physiological left/right jitter.
    pub sym_sigma: f64,
    /// Std of the instrument noise per reading (device accuracy 0.2 C).
    pub meas_sigma: f64,
    pub tumor_amp_min: f64,
    pub tumor_amp_max: f64,
    /// Fraction of the hotspot amplitude reaching the two ring-adjacent
    /// points.
    pub spill_fraction: f64,
    /// Skin elevation as a fraction of the internal elevation.
    pub skin_coupling: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_cases: 4932,
            positive_fraction: 548.0 / 4932.0,
            skin_baseline: 33.5,
            internal_baseline: 36.8,
            case_offset_sigma: 0.3,
            sym_sigma: 0.15,
            meas_sigma: 0.2,
            tumor_amp_min: 0.8,
            tumor_amp_max: 2.5,
            spill_fraction: 0.5,
            skin_coupling: 0.4,
            seed: 1,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cases < 10 {
            return Err(Error::invalid(format!(
                "generator: n_cases must be >= 10, got {}",
                self.n_cases
            )));
        }
        if !(0.0..=1.0).contains(&self.positive_fraction) {
            return Err(Error::invalid(format!(
                "generator: positive_fraction must be in [0, 1], got {}",
                self.positive_fraction
            )));
        }
        if self.tumor_amp_min < 0.0 || self.tumor_amp_max < self.tumor_amp_min {
            return Err(Error::invalid(
                "generator: tumor amplitude range must satisfy 0 <= min <= max".to_string(),
            ));
        }
        for (name, v) in [
            ("case_offset_sigma", self.case_offset_sigma),
            ("sym_sigma", self.sym_sigma),
            ("meas_sigma", self.meas_sigma),
            ("spill_fraction", self.spill_fraction),
            ("skin_coupling", self.skin_coupling),
        ] {
            if v < 0.0 {
                return Err(Error::invalid(format!("generator: {name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Where a cancer case's hotspot was placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hotspot {
    pub side: Side,
    pub point: usize,
    pub amplitude: f64,
}

/// Generate a dataset; class counts match `positive_fraction` (rounded).
pub fn generate_synthetic(config: &GeneratorConfig) -> Result<Dataset> {
    generate_with_metadata(config).map(|(ds, _)| ds)
}

/// As [`generate_synthetic`], also reporting each case's hotspot (if any).
pub fn generate_with_metadata(config: &GeneratorConfig) -> Result<(Dataset, Vec<Option<Hotspot>>)> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);

    let n = config.n_cases;
    let n_pos = (config.positive_fraction * n as f64).round() as usize;
    let mut labels = vec![Label::Healthy; n];
    for l in labels.iter_mut().take(n_pos) {
        *l = Label::Cancer;
    }
    rng.shuffle(&mut labels);

    let mut exams = Vec::with_capacity(n);
    let mut hotspots = Vec::with_capacity(n);
    for (case, &label) in labels.iter().enumerate() {
        let (exam, hotspot) = generate_case(case, label, config, &mut rng);
        exams.push(exam);
        hotspots.push(hotspot);
    }
    Ok((Dataset { exams }, hotspots))
}

fn generate_case(
    case: usize,
    label: Label,
    config: &GeneratorConfig,
    rng: &mut Rng,
) -> (MwrExam, Option<Hotspot>) {
    let mut values = [0.0; FEATURES];
    let case_offset = rng.next_gaussian() * config.case_offset_sigma;

    // Per-site physiological jitter, shared by the two modes of a site.
    let mut site_jitter = [0.0; 22];
    for j in &mut site_jitter {
        *j = rng.next_gaussian() * config.sym_sigma;
    }

    let mut fill = |idx: usize, baseline: f64, jitter: f64, rng: &mut Rng| {
        values[idx] = baseline + case_offset + jitter + rng.next_gaussian() * config.meas_sigma;
    };
    for (s, side) in [Side::Left, Side::Right].into_iter().enumerate() {
        for p in 0..10 {
            let jitter = site_jitter[s * 10 + p];
            fill(skin_index(side, p), config.skin_baseline, jitter, rng);
            fill(internal_index(side, p), config.internal_baseline, jitter, rng);
        }
    }
    for r in 0..2 {
        let jitter = site_jitter[20 + r];
        fill(40 + 2 * r, config.skin_baseline, jitter, rng);
        fill(41 + 2 * r, config.internal_baseline, jitter, rng);
    }

    let hotspot = if label == Label::Cancer {
        let side = if rng.below(2) == 0 { Side::Left } else { Side::Right };
        let point = rng.below(9) as usize;
        let amplitude = rng.uniform(config.tumor_amp_min, config.tumor_amp_max);
        apply_hotspot(&mut values, side, point, amplitude, config);
        Some(Hotspot { side, point, amplitude })
    } else {
        None
    };

    for v in &mut values {
        *v = v.clamp(crate::data::TEMP_MIN, crate::data::TEMP_MAX);
    }

    (
        MwrExam {
            id: format!("case_{case:05}"),
            label,
            values,
        },
        hotspot,
    )
}

fn apply_hotspot(
    values: &mut [f64; FEATURES],
    side: Side,
    point: usize,
    amplitude: f64,
    config: &GeneratorConfig,
) {
    let mut elevate = |p: usize, amount: f64| {
        values[internal_index(side, p)] += amount;
        values[skin_index(side, p)] += config.skin_coupling * amount;
    };
    elevate(point, amplitude);
    if point >= 1 {
        // Ring points 1-8 are cyclic; the nipple has no ring neighbors.
        let prev = ((point - 1) + 7) % 8 + 1;
        let next = (point - 1 + 1) % 8 + 1;
        elevate(prev, config.spill_fraction * amplitude);
        elevate(next, config.spill_fraction * amplitude);
    }
}
