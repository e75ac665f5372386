//! Sweep specifications, the two fig1 presets, and CSV output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use commsim_core::Scheme;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::{run_cells, Cell, CellSummary};
use crate::family::{Family, FamilyKind};

pub const CSV_HEADER: [&str; 12] = [
    "scheme",
    "family",
    "param",
    "d",
    "n",
    "b",
    "q",
    "trials",
    "seed",
    "mean_loss",
    "stderr",
    "theory_bound",
];

fn default_q() -> f64 {
    2.0
}

fn default_param() -> f64 {
    0.0
}

/// Cartesian grid of cells. Rows are produced scheme-major, then `d`, `n`, `b`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub schemes: Vec<Scheme>,
    pub family: FamilyKind,
    #[serde(default = "default_param")]
    pub param: f64,
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    pub b: Vec<u32>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_q")]
    pub q: f64,
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("schemes", self.schemes.is_empty()),
            ("n", self.n.is_empty()),
            ("d", self.d.is_empty()),
            ("b", self.b.is_empty()),
        ];
        if let Some((key, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Spec(format!("`{key}`: grid is empty")));
        }
        if self.trials == 0 {
            return Err(Error::Spec("`trials`: must be at least 1".into()));
        }
        if !(1.0..=2.0).contains(&self.q) {
            return Err(Error::Spec(format!("`q`: {} is outside [1, 2]", self.q)));
        }
        for &d in &self.d {
            self.family()
                .build(d, self.seed)
                .map_err(|e| Error::Spec(format!("`param`/`d`: {e}")))?;
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        Family::new(self.family, self.param)
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &scheme in &self.schemes {
            for &d in &self.d {
                for &n in &self.n {
                    for &b in &self.b {
                        out.push(Cell {
                            scheme,
                            family: self.family(),
                            d,
                            n,
                            b,
                            q: self.q,
                            trials: self.trials,
                            seed: self.seed,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn run(&self) -> Result<Vec<CellSummary>> {
        run_cells(&self.cells())
    }
}

pub const PRESET_SEED: u64 = 20_190_601;
pub const PRESET_TRIALS: usize = 50;

/// Left panel: error against `n` for Geo(0.8) at two alphabet sizes.
pub fn fig1_left() -> SweepSpec {
    SweepSpec {
        schemes: vec![Scheme::Minimax, Scheme::LocalizeRefine],
        family: FamilyKind::Geometric,
        param: 0.8,
        n: vec![2_000, 5_000, 10_000, 20_000, 50_000, 100_000],
        d: vec![100, 500],
        b: vec![2],
        trials: PRESET_TRIALS,
        seed: PRESET_SEED,
        q: 2.0,
    }
}

/// Right panel: error against `d` for Geo(0.8) at `n = 5e4`.
pub fn fig1_right() -> SweepSpec {
    SweepSpec {
        schemes: vec![Scheme::Minimax, Scheme::LocalizeRefine],
        family: FamilyKind::Geometric,
        param: 0.8,
        n: vec![50_000],
        d: vec![100, 200, 400, 800],
        b: vec![2],
        trials: PRESET_TRIALS,
        seed: PRESET_SEED,
        q: 2.0,
    }
}

pub fn preset(name: &str) -> Option<SweepSpec> {
    match name {
        "fig1-left" | "fig1_left" => Some(fig1_left()),
        "fig1-right" | "fig1_right" => Some(fig1_right()),
        _ => None,
    }
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the CSV table (LF line endings, minimal RFC 4180 quoting, reals
/// with 17 significant digits, empty `theory_bound` when none applies).
pub fn write_csv<W: Write>(rows: &[CellSummary], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.scheme.name().to_string(),
            r.family.clone(),
            real(r.param),
            r.d.to_string(),
            r.n.to_string(),
            r.b.to_string(),
            real(r.q),
            r.trials.to_string(),
            r.seed.to_string(),
            real(r.mean_loss),
            real(r.stderr),
            r.theory_bound.map(real).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn emit_csv(rows: &[CellSummary], path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    let mut buf = BufWriter::new(file);
    write_csv(rows, &mut buf)?;
    buf.flush().map_err(io)
}
