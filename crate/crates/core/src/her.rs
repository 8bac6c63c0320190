//! Photocatalytic hydrogen-evolution (HER) oracle: CSV ingestion, GP
//! emulator fitting, the chemistry hypothesis libraries, and a synthetic
//! stand-in dataset generator.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::gp::{GpFitOptions, GpModel, InputScaling, KernelParams};
use crate::space::{Hypothesis, LinearRow, SearchSpace};

/// Mixture components in CSV column order.
pub const COMPONENTS: [&str; 10] = ["P10", "Cys", "MB", "RB", "AR87", "NaOH", "NaCl", "SDS", "PVP", "NaDS"];
pub const TARGET: &str = "HER";

/// Photocatalyst mass range (mg); every liquid ranges over `[0, 5]` mL.
pub const P10_RANGE: (f64, f64) = (1.0, 5.0);
pub const LIQUID_RANGE: (f64, f64) = (0.0, 5.0);

/// Assumed dispensing granularity: 0.5 mg for P10, 0.25 mL for liquids.
pub const DEFAULT_STEPS: [f64; 10] = [0.5, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25];

pub type Composition = [f64; 10];

/// The 10-D composition space with component names.
pub fn her_space() -> SearchSpace {
    let mut lower = vec![LIQUID_RANGE.0; 10];
    let mut upper = vec![LIQUID_RANGE.1; 10];
    lower[0] = P10_RANGE.0;
    upper[0] = P10_RANGE.1;
    SearchSpace::new(lower, upper)
        .and_then(|s| s.with_names(COMPONENTS))
        .expect("static bounds are valid")
}

fn check_range(row: usize, c: &Composition) -> Result<()> {
    for (k, v) in c.iter().enumerate() {
        let (lo, hi) = if k == 0 { P10_RANGE } else { LIQUID_RANGE };
        if !(*v >= lo && *v <= hi) {
            return Err(Error::Range { row, column: COMPONENTS[k].to_string(), value: *v });
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct HerDataset {
    pub rows: Vec<(Composition, f64)>,
    pub steps: [f64; 10],
}

#[derive(Deserialize)]
struct StepsFile {
    steps: std::collections::BTreeMap<String, f64>,
}

impl HerDataset {
    pub fn new(rows: Vec<(Composition, f64)>) -> Result<Self> {
        for (i, (c, her)) in rows.iter().enumerate() {
            check_range(i + 1, c)?;
            if !(her.is_finite() && *her >= 0.0) {
                return Err(Error::Range { row: i + 1, column: TARGET.into(), value: *her });
            }
        }
        Ok(Self { rows, steps: DEFAULT_STEPS })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Reads a CSV with header `P10,...,NaDS,HER`. A sidecar file
    /// `<path>.steps.toml` with a `[steps]` table overrides discretization steps.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut d = Self::from_reader(std::fs::File::open(path)?)?;
        let sidecar = path.with_extension("steps.toml");
        if sidecar.exists() {
            d.apply_steps_file(&sidecar)?;
        }
        Ok(d)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected: Vec<&str> = COMPONENTS.iter().copied().chain([TARGET]).collect();
        let got: Vec<&str> = headers.iter().map(str::trim).collect();
        if got != expected {
            return Err(Error::Schema(format!("expected header `{}`, found `{}`", expected.join(","), got.join(","))));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            if rec.len() != expected.len() {
                return Err(Error::Schema(format!("row {row} has {} fields, expected {}", rec.len(), expected.len())));
            }
            let mut values = [0.0; 11];
            for (k, field) in rec.iter().enumerate() {
                values[k] = field.trim().parse::<f64>().map_err(|e| Error::Parse {
                    row,
                    column: expected[k].to_string(),
                    message: e.to_string(),
                })?;
            }
            let mut c = [0.0; 10];
            c.copy_from_slice(&values[..10]);
            rows.push((c, values[10]));
        }
        Self::new(rows)
    }

    pub fn apply_steps_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        let file: StepsFile = toml::from_str(&text).map_err(|e| Error::Config(format!("steps file: {e}")))?;
        for (name, step) in file.steps {
            let k = COMPONENTS
                .iter()
                .position(|c| *c == name)
                .ok_or_else(|| Error::Config(format!("unknown component `{name}` in steps file")))?;
            if !(step > 0.0) {
                return Err(Error::Config(format!("step for `{name}` must be positive")));
            }
            self.steps[k] = step;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::new();
        s.push_str(&COMPONENTS.join(","));
        s.push(',');
        s.push_str(TARGET);
        s.push('\n');
        for (c, her) in &self.rows {
            for v in c {
                let _ = write!(s, "{v},");
            }
            let _ = writeln!(s, "{her}");
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Larger datasets tune hyperparameters on a random subset of this many
/// rows, then condition on every row.
pub const HYPERPARAMETER_ROWS: usize = 300;

/// GP emulator of HER over the composition space.
#[derive(Clone, Debug)]
pub struct OracleModel {
    gp: GpModel,
    space: SearchSpace,
}

impl OracleModel {
    /// Fits a zero-mean Matérn-5/2 GP with homoscedastic noise; lengthscales
    /// start at each component's discretization step.
    pub fn fit<R: Rng + ?Sized>(data: &HerDataset, rng: &mut R) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::InvalidData("the oracle needs at least two rows".into()));
        }
        let space = her_space();
        let xs: Vec<Vec<f64>> = data.rows.iter().map(|(c, _)| c.to_vec()).collect();
        let ys: Vec<f64> = data.rows.iter().map(|(_, y)| *y).collect();
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        if var < 1e-12 {
            log::warn!("all HER values are identical; the oracle will be nearly flat");
        }
        let second_moment = ys.iter().map(|y| y * y).sum::<f64>() / n;
        let widths: Vec<f64> = space.lower().iter().zip(space.upper()).map(|(l, u)| u - l).collect();
        let init = KernelParams::new(
            second_moment.max(1e-3),
            data.steps.iter().zip(&widths).map(|(s, w)| s / w).collect(),
            (0.01 * var).max(1e-4),
        )?;
        let opts = GpFitOptions { optimize: true, restarts: 5, optimize_noise: true, isotropic: false, max_evals: 0 };
        let scaling = InputScaling::from_space(&space);
        let gp = if xs.len() <= HYPERPARAMETER_ROWS {
            GpModel::fit(&xs, &ys, scaling, &init, &opts, rng)?
        } else {
            let mut idx: Vec<usize> = (0..xs.len()).collect();
            idx.shuffle(rng);
            idx.truncate(HYPERPARAMETER_ROWS);
            idx.sort_unstable();
            let sub_x: Vec<Vec<f64>> = idx.iter().map(|&i| xs[i].clone()).collect();
            let sub_y: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
            let tuned = GpModel::fit(&sub_x, &sub_y, scaling.clone(), &init, &opts, rng)?;
            GpModel::fit(&xs, &ys, scaling, tuned.params(), &GpFitOptions::fixed(), rng)?
        };
        Ok(Self { gp, space })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn gp(&self) -> &GpModel {
        &self.gp
    }

    pub fn noise_variance(&self) -> f64 {
        self.gp.params().noise_variance
    }

    /// Posterior mean HER at `composition`.
    pub fn evaluate(&self, composition: &[f64]) -> Result<f64> {
        self.space.check_dim(composition)?;
        if !self.space.contains(composition) {
            return Err(Error::InvalidArgument(format!("composition {composition:?} outside component ranges")));
        }
        Ok(self.gp.predict_mean(composition))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChemistryKind {
    WhatTheyKnew,
    PerfectHindsight,
    BizarroWorld,
    VirtualChemists,
}

impl std::str::FromStr for ChemistryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "what_they_knew" => Ok(Self::WhatTheyKnew),
            "perfect_hindsight" => Ok(Self::PerfectHindsight),
            "bizarro_world" => Ok(Self::BizarroWorld),
            "virtual_chemists" => Ok(Self::VirtualChemists),
            other => Err(Error::Config(format!("unknown chemistry hypothesis set `{other}`"))),
        }
    }
}

pub fn chemistry_hypotheses(kind: ChemistryKind) -> Result<Vec<Hypothesis>> {
    let s = her_space();
    match kind {
        ChemistryKind::WhatTheyKnew => Ok(vec![Hypothesis::builder("What They Knew", &s)
            .eq(&[("P10", 1.0)], 5.0)
            .between(&[("Cys", 1.0)], 1.0, 4.0)
            .lt(&[("MB", 1.0)], 0.5)
            .lt(&[("RB", 1.0)], 0.5)
            .lt(&[("AR87", 1.0)], 1.0)
            .lt(&[("NaOH", 1.0)], 3.0)
            .lt(&[("NaCl", 1.0)], 3.0)
            .lt(&[("SDS", 1.0)], 1.0)
            .lt(&[("PVP", 1.0)], 2.0)
            .lt(&[("NaDS", 1.0)], 4.0)
            .build()?]),
        ChemistryKind::PerfectHindsight => Ok(vec![Hypothesis::builder("Perfect Hindsight", &s)
            .ge(&[("P10", 1.0)], 3.5)
            .between(&[("Cys", 1.0)], 1.0, 3.5)
            .between(&[("NaOH", 1.0)], 0.5, 2.0)
            .between(&[("NaDS", 1.0)], 0.0, 1.5)
            .between(&[("Cys", 1.0), ("NaOH", 1.0), ("NaDS", 1.0)], 2.0, 4.5)
            .between(&[("NaCl", 1.0), ("NaDS", 1.0), ("NaOH", 1.0)], 1.0, 2.75)
            .eq(&[("MB", 1.0)], 0.0)
            .eq(&[("AR87", 1.0)], 0.0)
            .eq(&[("RB", 1.0)], 0.0)
            .lt(&[("NaCl", 1.0)], 2.5)
            .eq(&[("SDS", 1.0)], 0.0)
            .eq(&[("PVP", 1.0)], 0.0)
            .build()?]),
        ChemistryKind::BizarroWorld => Ok(vec![Hypothesis::builder("Bizarro World", &s)
            .eq(&[("P10", 1.0)], 1.0)
            .eq(&[("Cys", 1.0)], 0.0)
            .gt(&[("MB", 1.0)], 0.5)
            .gt(&[("AR87", 1.0)], 0.5)
            .gt(&[("RB", 1.0)], 0.5)
            .eq(&[("NaOH", 1.0)], 0.0)
            .gt(&[("NaCl", 1.0)], 0.5)
            .gt(&[("SDS", 1.0)], 0.5)
            .gt(&[("PVP", 1.0)], 0.5)
            .eq(&[("NaDS", 1.0)], 0.0)
            .build()?]),
        ChemistryKind::VirtualChemists => virtual_chemists(&s),
    }
}

fn virtual_chemists(s: &SearchSpace) -> Result<Vec<Hypothesis>> {
    Ok(vec![
        Hypothesis::builder("Dye Sceptic", s)
            .eq(&[("MB", 1.0)], 0.0)
            .eq(&[("AR87", 1.0)], 0.0)
            .eq(&[("RB", 1.0)], 0.0)
            .build()?,
        Hypothesis::builder("Dye Fanatic", s).gt(&[("MB", 1.0), ("AR87", 1.0), ("RB", 1.0)], 3.0).build()?,
        Hypothesis::builder("AR87 Obsessed", s)
            .gt(&[("AR87", 1.0)], 3.0)
            .lt(&[("MB", 1.0)], 0.5)
            .lt(&[("RB", 1.0)], 0.5)
            .build()?,
        Hypothesis::builder("Surfactant Sceptic", s).eq(&[("SDS", 1.0)], 0.0).eq(&[("PVP", 1.0)], 0.0).build()?,
        Hypothesis::builder("Scavenger Obsessive", s).gt(&[("Cys", 1.0)], 4.0).build()?,
        Hypothesis::builder("pH Fanatic", s).gt(&[("NaOH", 1.0), ("NaDS", 1.0)], 3.5).build()?,
        Hypothesis::builder("H-bond Lover", s).gt(&[("NaDS", 1.0)], 3.5).build()?,
        Hypothesis::builder("Halophile", s).gt(&[("NaOH", 1.0), ("NaDS", 1.0), ("NaCl", 1.0)], 3.5).build()?,
        Hypothesis::builder("Halophobe", s).eq(&[("NaCl", 1.0)], 0.0).build()?,
    ])
}

/// Total liquid volume (every component but P10) of at most 5 mL.
pub fn volume_cap_row() -> LinearRow {
    let mut coeffs = vec![1.0; COMPONENTS.len()];
    coeffs[0] = 0.0;
    LinearRow::new(coeffs, 5.0)
}

/// `h` with the total-volume cap appended. The cap alone covers about
/// 1/9! of the liquid box, so it is only usable on hypotheses that are
/// already tight enough for rejection sampling to certify.
pub fn with_volume_cap(h: &Hypothesis) -> Result<Hypothesis> {
    let mut ineq = h.ineq_rows().to_vec();
    ineq.push(volume_cap_row());
    Hypothesis::new(h.label(), h.space(), h.eq_rows().to_vec(), ineq)
}

/// Noise-free stand-in HER surface (µmol/h):
///
/// `6 · (P10/5) · exp(−((Cys − 2.5)/1.5)²) · (0.5 + 0.5 exp(−(NaOH − 1.25)²))
///  · exp(−0.5 (MB + RB + AR87)) · exp(−0.2 (SDS + PVP)) · exp(−0.05 (NaCl + NaDS − 1.5)²)`
///
/// Peaked in P10, Cys and NaOH, strongly suppressed by the dyes and mildly
/// by the surfactants.
pub fn standin_her(c: &Composition) -> f64 {
    let [p10, cys, mb, rb, ar87, naoh, nacl, sds, pvp, nads] = *c;
    6.0 * (p10 / 5.0)
        * (-((cys - 2.5) / 1.5).powi(2)).exp()
        * (0.5 + 0.5 * (-(naoh - 1.25).powi(2)).exp())
        * (-0.5 * (mb + rb + ar87)).exp()
        * (-0.2 * (sds + pvp)).exp()
        * (-0.05 * (nacl + nads - 1.5).powi(2)).exp()
}

/// Noise standard deviation added to stand-in measurements.
pub const STANDIN_NOISE: f64 = 0.1;

/// Samples `rows` compositions on the default dispensing grid (each liquid is
/// absent with probability 1/2) and records `standin_her` plus Gaussian
/// noise, floored at zero.
pub fn generate_standin_dataset<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Result<HerDataset> {
    if rows < 10 {
        return Err(Error::InvalidArgument(format!("stand-in dataset needs at least 10 rows, got {rows}")));
    }
    let noise = Normal::new(0.0, STANDIN_NOISE).expect("valid sigma");
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let mut c = [0.0; 10];
        for (k, v) in c.iter_mut().enumerate() {
            let (lo, hi) = if k == 0 { P10_RANGE } else { LIQUID_RANGE };
            let step = DEFAULT_STEPS[k];
            let levels = ((hi - lo) / step).round() as usize;
            *v = if k > 0 && rng.random_bool(0.5) { 0.0 } else { lo + step * rng.random_range(0..=levels) as f64 };
        }
        let her = (standin_her(&c) + noise.sample(rng)).max(0.0);
        out.push((c, her));
    }
    HerDataset::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn comp(pairs: &[(&str, f64)]) -> Vec<f64> {
        let mut c = vec![0.0; 10];
        c[0] = 1.0;
        for (n, v) in pairs {
            c[COMPONENTS.iter().position(|k| k == n).unwrap()] = *v;
        }
        c
    }

    fn csv(rows: &[&str]) -> String {
        let mut s = String::from("P10,Cys,MB,RB,AR87,NaOH,NaCl,SDS,PVP,NaDS,HER\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn loads_well_formed_csv() {
        let text = csv(&["5,2,0,0,0,1,0,0,0,0,3.2", "1,0,0,0,0,0,0,0,0,0,0", "2.5,1,0.5,0,0,0,0,0,1,0,1.1"]);
        let d = HerDataset::from_reader(text.as_bytes()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.rows[0].1, 3.2);
    }

    #[test]
    fn csv_errors() {
        let low = csv(&["0.5,2,0,0,0,1,0,0,0,0,3.2"]);
        match HerDataset::from_reader(low.as_bytes()) {
            Err(Error::Range { row, column, .. }) => assert_eq!((row, column.as_str()), (1, "P10")),
            other => panic!("{other:?}"),
        }
        let dye = "P10,Cys,Dye,RB,AR87,NaOH,NaCl,SDS,PVP,NaDS,HER\n5,2,0,0,0,1,0,0,0,0,3.2\n";
        assert!(matches!(HerDataset::from_reader(dye.as_bytes()), Err(Error::Schema(_))));
        let bad = csv(&["5,two,0,0,0,1,0,0,0,0,3.2"]);
        assert!(matches!(HerDataset::from_reader(bad.as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn what_they_knew_membership() {
        let h = &chemistry_hypotheses(ChemistryKind::WhatTheyKnew).unwrap()[0];
        let mut x = comp(&[("Cys", 2.0)]);
        x[0] = 5.0;
        assert!(h.contains(&x).unwrap());
        x[0] = 4.0;
        assert!(!h.contains(&x).unwrap());
    }

    #[test]
    fn virtual_chemist_membership() {
        let vc = chemistry_hypotheses(ChemistryKind::VirtualChemists).unwrap();
        assert_eq!(vc.len(), 9);
        let fanatic = vc.iter().find(|h| h.label() == "Dye Fanatic").unwrap();
        assert!(fanatic.contains(&comp(&[("MB", 2.0), ("AR87", 2.0)])).unwrap());
        let phobe = vc.iter().find(|h| h.label() == "Halophobe").unwrap();
        assert!(!phobe.contains(&comp(&[("NaCl", 0.25)])).unwrap());
        assert!(!phobe.contains(&comp(&[("NaCl", 1e-6)])).unwrap());
        assert!(phobe.contains(&comp(&[])).unwrap());
    }

    #[test]
    fn hindsight_and_bizarro_are_disjoint() {
        let ph = &chemistry_hypotheses(ChemistryKind::PerfectHindsight).unwrap()[0];
        let bw = &chemistry_hypotheses(ChemistryKind::BizarroWorld).unwrap()[0];
        assert_eq!(ph.ineq_rows().len() + ph.eq_rows().len(), 17);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let a = ph.sample_uniform(&mut rng, 100_000).unwrap();
            assert!(!bw.contains(&a).unwrap());
            let b = bw.sample_uniform(&mut rng, 100_000).unwrap();
            assert!(!ph.contains(&b).unwrap());
        }
    }

    #[test]
    fn standin_is_valid_and_deterministic() {
        let a = generate_standin_dataset(200, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = generate_standin_dataset(200, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        let back = HerDataset::from_reader(a.to_csv_string().as_bytes()).unwrap();
        assert_eq!(back.rows, a.rows);
        assert!(generate_standin_dataset(5, &mut ChaCha8Rng::seed_from_u64(5)).is_err());
    }

    #[test]
    fn dyes_lower_standin_her() {
        let d = generate_standin_dataset(2000, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let dye = |c: &Composition| c[2] + c[3] + c[4];
        let mean = |f: &dyn Fn(&Composition) -> bool| {
            let v: Vec<f64> = d.rows.iter().filter(|(c, _)| f(c)).map(|(_, y)| *y).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(&|c| dye(c) > 3.0) < mean(&|c| dye(c) == 0.0));
    }

    #[test]
    fn replicate_noise_is_recovered() {
        let mut c = [0.0; 10];
        c[0] = 3.0;
        c[1] = 2.0;
        let d = HerDataset::new(vec![(c, 3.0), (c, 5.0)]).unwrap();
        let m = OracleModel::fit(&d, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        // sample variance of the duplicates is 2
        assert!(m.noise_variance() >= 1.0, "noise {}", m.noise_variance());
    }

    #[test]
    fn oracle_is_total_and_deterministic() {
        let d = generate_standin_dataset(60, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let m = OracleModel::fit(&d, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let x = comp(&[]);
        let a = m.evaluate(&x).unwrap();
        assert!(a.is_finite());
        assert_eq!(a, m.evaluate(&x).unwrap());
        assert!(m.evaluate(&comp(&[("MB", 6.0)])).is_err());
        let sd = m.noise_variance().sqrt();
        for (c, y) in d.rows.iter().take(10) {
            assert!((m.evaluate(c).unwrap() - y).abs() <= 3.0 * sd + 1e-9);
        }
    }

    #[test]
    fn steps_sidecar_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("her.csv");
        std::fs::write(&p, csv(&["5,2,0,0,0,1,0,0,0,0,3.2", "1,0,0,0,0,0,0,0,0,0,0"])).unwrap();
        std::fs::write(dir.path().join("her.steps.toml"), "[steps]\nP10 = 1.0\nNaCl = 0.5\n").unwrap();
        let d = HerDataset::load_csv(&p).unwrap();
        assert_eq!(d.steps[0], 1.0);
        assert_eq!(d.steps[6], 0.5);
        assert_eq!(d.steps[1], 0.25);
    }
}
