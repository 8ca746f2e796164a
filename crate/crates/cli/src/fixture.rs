//! Synthetic cohort extract shaped like a biobank smoking and HbA1c study.
//!
//! The file mimics the raw coding of such an extract: cigarettes per day use
//! `-10` for "less than one a day" and `-1` for "do not know", HbA1c is in
//! IFCC units, a few cells are blank and one HbA1c reading is implausible.
//! Effects are set on the NGSP scale so that the analysis recovers them after
//! conversion.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};

use crate::preprocess::IFCC_TO_NGSP;

pub const FIXTURE_SEED: u64 = 20_240_117;
pub const FIXTURE_ROWS: usize = 4_500;

/// Minor allele frequencies of the five score SNPs.
pub const SCORE_MAF: [f64; 5] = [0.35, 0.28, 0.22, 0.40, 0.18];

/// Effect-model coefficients on the NGSP scale: `a`, `a*cigs`, `cigs`.
pub const TRUE_XI: [f64; 3] = [-0.4, 0.09, 0.02];

pub const HEADER: &str = "eid,rs_exposure,cigs_per_day,age,sex,g1,g2,g3,g4,g5,hba1c_ifcc";

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Renders the synthetic extract as CSV text.
pub fn synthetic_extract(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let noise = Normal::new(0.0, 0.3).unwrap();
    let genotypes: Vec<Binomial> = SCORE_MAF.iter().map(|&p| Binomial::new(2, p).unwrap()).collect();
    let score_mean: f64 = SCORE_MAF.iter().map(|p| 2.0 * p).sum();
    let outlier_row = n / 3;

    let mut out = String::with_capacity(n * 48);
    out.push_str(HEADER);
    out.push('\n');
    for i in 0..n {
        let a = u8::from(rng.random::<f64>() < 0.35);
        let g: Vec<u64> = genotypes.iter().map(|d| d.sample(&mut rng)).collect();
        let s = g.iter().sum::<u64>() as f64 - score_mean;
        let age = rng.random_range(40..=70);
        let sex = u8::from(rng.random::<f64>() < 0.46);
        let u: f64 = std_normal.sample(&mut rng);

        let af = f64::from(a);
        let smoker = rng.random::<f64>() < logistic(0.6 + 0.9 * u + 0.3 * f64::from(sex));
        let cigs = if smoker {
            let level = 9.0 + 2.5 * u + 0.8 * s + af * (4.0 + 4.0 * s + 2.5 * s * s) + 3.0 * std_normal.sample(&mut rng);
            level.round().max(1.0)
        } else {
            0.0
        };

        let ngsp = 5.3
            + 0.012 * f64::from(age - 55)
            + 0.05 * f64::from(sex)
            + 0.3 * u
            + TRUE_XI[0] * af
            + TRUE_XI[1] * af * cigs
            + TRUE_XI[2] * cigs
            + noise.sample(&mut rng);
        let ifcc = (ngsp - IFCC_TO_NGSP.1) / IFCC_TO_NGSP.0;

        let coded_cigs = if cigs > 0.0 && rng.random::<f64>() < 0.03 {
            "-1".to_string()
        } else if cigs == 0.0 && rng.random::<f64>() < 0.02 {
            "-10".to_string()
        } else {
            format!("{cigs}")
        };
        let age_cell = if rng.random::<f64>() < 0.01 { String::new() } else { age.to_string() };
        let hba1c_cell = if i == outlier_row {
            "412.0".to_string()
        } else if rng.random::<f64>() < 0.015 {
            String::new()
        } else {
            format!("{ifcc:.1}")
        };
        let _ = writeln!(
            out,
            "{},{a},{coded_cigs},{age_cell},{sex},{},{},{},{},{},{hba1c_cell}",
            1_000_001 + i,
            g[0],
            g[1],
            g[2],
            g[3],
            g[4]
        );
    }
    out
}

/// Analysis configuration matching [`synthetic_extract`].
pub const ANALYZE_TOML: &str = r#"[data]
path = "ukb_synthetic.csv"

[roles]
exposure = "rs_exposure"
mediators = ["cigs_per_day"]
covariates = ["age", "sex"]
instruments = ["g1", "g2", "g3", "g4", "g5"]
outcome = "hba1c_ifcc"

[[preprocess]]
op = "recode-to-zero"
column = "cigs_per_day"
values = [-10]

[[preprocess]]
op = "set-missing"
column = "cigs_per_day"
values = [-1]

[[preprocess]]
op = "exclude-above"
column = "hba1c_ifcc"
threshold = 200

[[preprocess]]
op = "ifcc-to-ngsp"
column = "hba1c_ifcc"

[model]
tau1 = ["a", "a*cigs_per_day"]
tau2 = ["cigs_per_day"]
instruments = ["1", "score", "score*score"]

[allele_score]
columns = ["g1", "g2", "g3", "g4", "g5"]

[propensity]
kind = "constant-mean"

[baseline]
covariates = ["age", "sex"]

[selection]
criterion = "gic"

[[selection.candidates]]
label = "exposure only"
terms = ["a"]

[[selection.candidates]]
label = "interaction"
terms = ["a", "a*cigs_per_day"]

[[selection.candidates]]
label = "full"
terms = ["a", "a*cigs_per_day", "cigs_per_day"]

[report]
levels = [[0], [10], [20]]
confidence = 0.99
"#;
