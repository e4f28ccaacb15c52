//! Pipeline configuration and its flat `key=value` file format.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {value}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Inclusive nucleotide length range, written `lo,hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LenRange {
    pub min: usize,
    pub max: usize,
}

impl LenRange {
    pub fn contains(&self, len: usize) -> bool {
        self.min <= len && len <= self.max
    }
}

impl fmt::Display for LenRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.min, self.max)
    }
}

impl FromStr for LenRange {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let (lo, hi) = s.split_once(',').ok_or(())?;
        let min = lo.trim().parse().map_err(|_| ())?;
        let max = hi.trim().parse().map_err(|_| ())?;
        Ok(LenRange { min, max })
    }
}

macro_rules! pipeline_config {
    ($( $(#[$doc:meta])* $field:ident : $ty:ty = $default:expr, )*) => {
        /// Every tunable threshold of the pipeline. All values can be
        /// overridden from a config file.
        #[derive(Debug, Clone, PartialEq)]
        pub struct PipelineConfig {
            $( $(#[$doc])* pub $field: $ty, )*
        }

        impl Default for PipelineConfig {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        impl PipelineConfig {
            pub const KEYS: &'static [&'static str] = &[$( stringify!($field), )*];

            /// Sets one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                let bad = || ConfigError::BadValue {
                    line: 0,
                    key: key.to_string(),
                    value: value.to_string(),
                };
                match key {
                    $( stringify!($field) => {
                        self.$field = value.trim().parse::<$ty>().map_err(|_| bad())?;
                    } )*
                    _ => return Err(ConfigError::UnknownKey { line: 0, key: key.to_string() }),
                }
                Ok(())
            }

            /// All `(key, value)` pairs in declaration order.
            pub fn pairs(&self) -> Vec<(&'static str, String)> {
                vec![$( (stringify!($field), self.$field.to_string()), )*]
            }
        }
    };
}

pipeline_config! {
    /// Minimum total read count of an sRNA kept before alignment.
    min_srna_freq: u64 = 10,
    /// Minimum count of the mature read in a library for it to be called there.
    min_mirna_freq: u64 = 100,
    min_srna_len: usize = 18,
    mirna_len_range: LenRange = LenRange { min: 21, max: 24 },
    max_premirna_len: usize = 300,
    max_loci: usize = 15,
    precursor_search_range: usize = 300,
    extra_flank: usize = 10,
    dust_threshold: f64 = 2.0,
    max_second_loop: usize = 5,
    dominance_threshold: f64 = 0.75,
    duplex_max_unpaired: usize = 5,
    duplex_max_bulge: usize = 3,
    fc_up: f64 = 2.0,
    fc_down: f64 = 0.5,
    alpha: f64 = 0.05,
    enrich_alpha: f64 = 0.05,
    bitscore_threshold: f64 = 20.0,
    bitscore_lambda: f64 = 1.374,
    bitscore_k: f64 = 0.711,
    target_mismatch: f64 = 1.0,
    target_wobble: f64 = 0.5,
    target_gap: f64 = 2.0,
    /// First miRNA position (1-based) with doubled target penalties.
    target_seed_start: usize = 2,
    target_seed_end: usize = 13,
    target_seed_factor: f64 = 2.0,
    target_keep: usize = 100,
    target_top: usize = 5,
    /// Accepted for compatibility; the pair-maximizing folder ignores it.
    temperature: f64 = 37.0,
    workers: usize = default_workers(),
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// The built-in defaults, tuned for plant small-RNA libraries.
pub fn default_config() -> PipelineConfig {
    PipelineConfig::default()
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let r = self.mirna_len_range;
        if r.min > r.max {
            return fail("mirna_len_range lower bound exceeds upper bound");
        }
        if r.min < self.min_srna_len || r.max > self.max_premirna_len {
            return fail("mirna_len_range must lie within [min_srna_len, max_premirna_len]");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail("alpha must be in (0, 1)");
        }
        if !(self.enrich_alpha > 0.0 && self.enrich_alpha < 1.0) {
            return fail("enrich_alpha must be in (0, 1)");
        }
        if self.workers == 0 {
            return fail("workers must be >= 1");
        }
        if self.dust_threshold.is_nan() || self.dust_threshold <= 0.0 {
            return fail("dust_threshold must be > 0");
        }
        if !(0.0..=1.0).contains(&self.dominance_threshold) {
            return fail("dominance_threshold must be in [0, 1]");
        }
        if !(self.fc_up > 0.0 && self.fc_down > 0.0) {
            return fail("fold-change cutoffs must be positive");
        }
        if !(self.bitscore_lambda > 0.0) || !(self.bitscore_k > 0.0 && self.bitscore_k < 1.0) {
            return fail("bitscore_lambda must be > 0 and bitscore_k in (0, 1)");
        }
        if self.target_seed_start == 0 || self.target_seed_start > self.target_seed_end {
            return fail("target seed range must be 1-based and non-empty");
        }
        if self.target_top == 0 || self.target_keep == 0 {
            return fail("target_keep and target_top must be >= 1");
        }
        Ok(())
    }

    /// Parses a config file body on top of the defaults. `#` starts a
    /// comment; blank lines are ignored; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies overrides from a config body without validating.
    pub fn apply(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: line_no })?;
            self.set(key.trim(), value.trim()).map_err(|e| match e {
                ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line: line_no, key },
                ConfigError::BadValue { key, value, .. } => ConfigError::BadValue {
                    line: line_no,
                    key,
                    value,
                },
                other => other,
            })?;
        }
        Ok(())
    }

    /// Serializes every key in the config-file format.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.pairs() {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}
