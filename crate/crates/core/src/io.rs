//! Instance and solution JSON, and the history CSV.
//!
//! Instance files use 1-based `n`, `k`, `l`, matrices as row-major flat
//! arrays with explicit dims, and the string `"inf"` for an infinite slope.
//! [`instance_to_json`] emits the canonical form; loading and re-saving a
//! canonical file reproduces it byte for byte.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{LossKind, ScalarLoss};
use crate::solvers::{Solution, SolverKind};
use crate::ssm::{InstanceMeta, Observation, Priors, ProblemInstance, Site, StateSpaceModel};

pub const INSTANCE_FORMAT: &str = "dualnup-instance";
pub const SOLUTION_FORMAT: &str = "dualnup-solution";
pub const SCHEMA_VERSION: u32 = 1;

/// Column names of the history CSV, in order.
pub const HISTORY_HEADER: [&str; 7] = ["solver", "seed", "iter", "J", "rel_gap_to_oracle", "max_violation", "elapsed_s"];

mod ext_f64 {
    //! `f64` that may be `+∞`, written as the string `"inf"`.
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) if matches!(s.as_str(), "inf" | "+inf" | "infinity") => Ok(f64::INFINITY),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct Dims {
    pub M: usize,
    pub L: usize,
    pub K: usize,
    pub N: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorsFile {
    pub m_x1: Vec<f64>,
    pub v_x1: Vec<f64>,
    pub m_u: Vec<f64>,
    pub v_u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub kind: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(with = "ext_f64")]
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputLossRecord {
    pub n: usize,
    pub k: usize,
    #[serde(flatten)]
    pub loss: LossParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputLossRecord {
    pub n: usize,
    pub l: usize,
    #[serde(flatten)]
    pub loss: LossParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRecord {
    pub n: usize,
    pub k: usize,
    pub target: f64,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaFile {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub generator_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub format: String,
    pub version: u32,
    pub dims: Dims,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub priors: PriorsFile,
    /// Output losses.
    pub constraints: Vec<OutputLossRecord>,
    #[serde(default)]
    pub input_constraints: Vec<InputLossRecord>,
    #[serde(default)]
    pub observations: Vec<ObservationRecord>,
    #[serde(default)]
    pub meta: MetaFile,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn matrix(name: &str, data: &[f64], rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::InvalidInstance(format!("{name}: expected {rows}x{cols} = {} entries, got {}", rows * cols, data.len())));
    }
    if !data.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInstance(format!("{name}: entries must be finite")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

fn vector(name: &str, data: &[f64], len: usize) -> Result<DVector<f64>> {
    Ok(DVector::from_column_slice(matrix(name, data, len, 1)?.as_slice()))
}

fn loss_params(loss: &ScalarLoss) -> LossParams {
    let kind = loss.kind();
    LossParams {
        kind,
        a: kind.uses_a().then(|| loss.a()),
        b: kind.uses_b().then(|| loss.b()),
        beta: loss.beta(),
    }
}

fn params_loss(r: &LossParams, n: usize, what: &str) -> Result<ScalarLoss> {
    let need = |v: Option<f64>, used: bool, name: &str| -> Result<f64> {
        match (v, used) {
            (Some(v), true) => Ok(v),
            (None, false) => Ok(0.0),
            (None, true) => Err(Error::InvalidInstance(format!("{what} at n={n}: kind {} needs `{name}`", r.kind))),
            (Some(_), false) => Err(Error::InvalidInstance(format!("{what} at n={n}: kind {} takes no `{name}`", r.kind))),
        }
    };
    let a = need(r.a, r.kind.uses_a(), "a")?;
    let b = need(r.b, r.kind.uses_b(), "b")?;
    if r.kind.is_hard() && r.beta != f64::INFINITY {
        return Err(Error::InvalidInstance(format!("{what} at n={n}: kind {} requires beta \"inf\"", r.kind)));
    }
    ScalarLoss::new(r.kind, a, b, r.beta)
}

impl InstanceFile {
    pub fn from_instance(inst: &ProblemInstance) -> Self {
        let (m, l, k, n) = inst.dims();
        let pr = &inst.priors;
        let mut constraints = Vec::new();
        let mut input_constraints = Vec::new();
        for (site, loss) in inst.losses() {
            match site {
                Site::Output { n, k } => constraints.push(OutputLossRecord { n: n + 1, k: k + 1, loss: loss_params(loss) }),
                Site::Input { n, l } => input_constraints.push(InputLossRecord { n: n + 1, l: l + 1, loss: loss_params(loss) }),
            }
        }
        let observations = inst
            .observations()
            .map(|((n, k), o)| ObservationRecord { n: n + 1, k: k + 1, target: o.target, var: o.var })
            .collect();
        Self {
            format: INSTANCE_FORMAT.into(),
            version: SCHEMA_VERSION,
            dims: Dims { M: m, L: l, K: k, N: n },
            a: row_major(&inst.model.a),
            b: row_major(&inst.model.b),
            c: row_major(&inst.model.c),
            priors: PriorsFile {
                m_x1: pr.m_x1.as_slice().to_vec(),
                v_x1: row_major(&pr.v_x1),
                m_u: pr.m_u.as_slice().to_vec(),
                v_u: row_major(&pr.v_u),
            },
            constraints,
            input_constraints,
            observations,
            meta: MetaFile { seed: inst.meta.seed, generator_version: inst.meta.generator.clone() },
        }
    }

    pub fn to_instance(&self) -> Result<ProblemInstance> {
        if self.format != INSTANCE_FORMAT {
            return Err(Error::InvalidInstance(format!("format must be {INSTANCE_FORMAT:?}, got {:?}", self.format)));
        }
        if self.version != SCHEMA_VERSION {
            return Err(Error::InvalidInstance(format!("unsupported schema version {}", self.version)));
        }
        let Dims { M: m, L: l, K: k, N: n } = self.dims;
        let model = StateSpaceModel::new(matrix("A", &self.a, m, m)?, matrix("B", &self.b, m, l)?, matrix("C", &self.c, k, m)?, n)?;
        let p = &self.priors;
        let priors = Priors::new(
            vector("priors.m_x1", &p.m_x1, m)?,
            matrix("priors.v_x1", &p.v_x1, m, m)?,
            vector("priors.m_u", &p.m_u, l)?,
            matrix("priors.v_u", &p.v_u, l, l)?,
        )?;
        let mut inst = ProblemInstance::new(model, priors)?;
        let index = |r_n: usize, r_i: usize, what: &str| -> Result<(usize, usize)> {
            if r_n == 0 || r_i == 0 {
                return Err(Error::InvalidInstance(format!("{what}: indices are 1-based")));
            }
            Ok((r_n - 1, r_i - 1))
        };
        for r in &self.constraints {
            let (t, kk) = index(r.n, r.k, "constraint")?;
            if t < n && kk < k && inst.output_loss(t, kk).is_some() {
                return Err(Error::InvalidInstance(format!("duplicate constraint at n={}, k={}", r.n, r.k)));
            }
            inst.set_output_loss(t, kk, Some(params_loss(&r.loss, r.n, "constraint")?))?;
        }
        for r in &self.input_constraints {
            let (t, ll) = index(r.n, r.l, "input constraint")?;
            if t < n && ll < l && inst.input_loss(t, ll).is_some() {
                return Err(Error::InvalidInstance(format!("duplicate input constraint at n={}, l={}", r.n, r.l)));
            }
            inst.set_input_loss(t, ll, Some(params_loss(&r.loss, r.n, "input constraint")?))?;
        }
        for o in &self.observations {
            let (t, kk) = index(o.n, o.k, "observation")?;
            if t < n && kk < k && inst.observation(t, kk).is_some() {
                return Err(Error::InvalidInstance(format!("duplicate observation at n={}, k={}", o.n, o.k)));
            }
            inst.set_observation(t, kk, Some(Observation { target: o.target, var: o.var }))?;
        }
        inst.meta = InstanceMeta { seed: self.meta.seed, generator: self.meta.generator_version.clone() };
        Ok(inst)
    }
}

/// Canonical JSON text of an instance, newline-terminated.
pub fn instance_to_json(inst: &ProblemInstance) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&InstanceFile::from_instance(inst))?;
    s.push('\n');
    Ok(s)
}

pub fn instance_from_json(text: &str) -> Result<ProblemInstance> {
    let file: InstanceFile = serde_json::from_str(text)?;
    file.to_instance()
}

pub fn save_instance(inst: &ProblemInstance, path: &Path) -> Result<()> {
    std::fs::write(path, instance_to_json(inst)?)?;
    Ok(())
}

pub fn load_instance(path: &Path) -> Result<ProblemInstance> {
    instance_from_json(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualDecisionRecord {
    /// `"output"` or `"input"`.
    pub site: String,
    pub n: usize,
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub format: String,
    pub version: u32,
    pub solver: String,
    #[serde(rename = "J")]
    pub j: f64,
    pub converged: bool,
    pub iters: usize,
    pub max_violation: f64,
    pub x1_hat: Vec<f64>,
    /// `N` rows of `L` entries.
    pub u_hat: Vec<Vec<f64>>,
    /// `N` rows of `K` entries.
    pub y_hat: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub z_tilde_hat: Vec<DualDecisionRecord>,
}

impl SolutionFile {
    pub fn from_solution(sol: &Solution) -> Self {
        let rows = |v: &[DVector<f64>]| v.iter().map(|r| r.as_slice().to_vec()).collect();
        let z_tilde_hat = sol
            .dual
            .as_ref()
            .map(|d| {
                d.sites
                    .iter()
                    .zip(&d.decisions)
                    .map(|(site, &value)| match *site {
                        Site::Output { n, k } => DualDecisionRecord { site: "output".into(), n: n + 1, index: k + 1, value },
                        Site::Input { n, l } => DualDecisionRecord { site: "input".into(), n: n + 1, index: l + 1, value },
                    })
                    .collect()
            })
            .unwrap_or_default();
        Self {
            format: SOLUTION_FORMAT.into(),
            version: SCHEMA_VERSION,
            solver: sol.solver.name().into(),
            j: sol.j,
            converged: sol.converged,
            iters: sol.iters,
            max_violation: sol.max_violation,
            x1_hat: sol.x1_hat.as_slice().to_vec(),
            u_hat: rows(&sol.u_hat),
            y_hat: rows(&sol.y_hat),
            z_tilde_hat,
        }
    }
}

pub fn solution_to_json(sol: &Solution) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&SolutionFile::from_solution(sol))?;
    s.push('\n');
    Ok(s)
}

/// One history CSV row. `iter` is the 1-based iteration, `"total"` for the
/// per-run summary row (whose `elapsed_s` is the total runtime), or
/// `"error"` for a run that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub solver: String,
    pub seed: Option<u64>,
    pub iter: String,
    #[serde(rename = "J")]
    pub j: Option<f64>,
    pub rel_gap_to_oracle: Option<f64>,
    pub max_violation: Option<f64>,
    pub elapsed_s: Option<f64>,
}

impl HistoryRow {
    /// Rows of one run: every recorded iteration, then the summary row.
    pub fn from_solution(sol: &Solution, seed: Option<u64>, oracle_j: Option<f64>, total_s: f64) -> Vec<Self> {
        let gap = |j: f64| oracle_j.map(|o| (j - o).abs() / o.abs().max(f64::MIN_POSITIVE));
        let solver = sol.solver.name().to_string();
        let mut rows: Vec<Self> = sol
            .history
            .records
            .iter()
            .map(|r| Self {
                solver: solver.clone(),
                seed,
                iter: r.iter.to_string(),
                j: Some(r.j),
                rel_gap_to_oracle: gap(r.j),
                max_violation: Some(r.max_violation),
                elapsed_s: Some(r.elapsed_s),
            })
            .collect();
        rows.push(Self {
            solver,
            seed,
            iter: "total".into(),
            j: Some(sol.j),
            rel_gap_to_oracle: gap(sol.j),
            max_violation: Some(sol.max_violation),
            elapsed_s: Some(total_s),
        });
        rows
    }

    pub fn error(solver: SolverKind, seed: Option<u64>) -> Self {
        Self { solver: solver.name().into(), seed, iter: "error".into(), j: None, rel_gap_to_oracle: None, max_violation: None, elapsed_s: None }
    }
}

pub fn write_history<W: Write>(out: W, rows: &[HistoryRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HISTORY_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history<R: std::io::Read>(input: R) -> Result<Vec<HistoryRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != HISTORY_HEADER {
        return Err(Error::InvalidInstance(format!("unexpected history header {header:?}")));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{iffbdd_solve, SolverConfig};
    use crate::ssm::{generate_appendix_b, generate_input_constrained, scalar_chain};

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        for inst in [generate_appendix_b(3, 2, 2, 4, 9).unwrap(), generate_input_constrained(2, 2, 1, 3, 4).unwrap()] {
            let text = instance_to_json(&inst).unwrap();
            let back = instance_from_json(&text).unwrap();
            assert_eq!(back, inst);
            assert_eq!(instance_to_json(&back).unwrap(), text);
        }
    }

    #[test]
    fn infinite_slope_is_written_as_string() {
        let mut inst = scalar_chain(2);
        inst.set_output_loss(0, 0, Some(ScalarLoss::geq(2.0).unwrap())).unwrap();
        inst.set_output_loss(1, 0, Some(ScalarLoss::hinge_ii(1.5, 3.0).unwrap())).unwrap();
        let text = instance_to_json(&inst).unwrap();
        assert!(text.contains("\"beta\": \"inf\""));
        assert!(text.contains("\"kind\": \"hinge_ii\""));
        assert!(text.contains("\"kind\": \"half_space_geq\""));
        assert_eq!(instance_from_json(&text).unwrap(), inst);
    }

    #[test]
    fn schema_errors() {
        let inst = scalar_chain(1);
        let good = instance_to_json(&inst).unwrap();
        let bad_dims = good.replace("\"A\": [\n    1.0\n  ]", "\"A\": [1.0, 2.0]");
        assert!(instance_from_json(&bad_dims).is_err());
        let unknown = good.replacen("{", "{\"extra\": 1,", 1);
        assert!(instance_from_json(&unknown).is_err());
        let mut file = InstanceFile::from_instance(&inst);
        let loss = LossParams { kind: LossKind::HalfSpaceGeq, a: Some(1.0), b: None, beta: f64::INFINITY };
        file.constraints.push(OutputLossRecord { n: 0, k: 1, loss });
        assert!(file.to_instance().is_err());
        file.constraints[0].n = 1;
        file.constraints[0].loss.beta = 5.0;
        assert!(file.to_instance().is_err());
        file.constraints[0].loss.beta = f64::INFINITY;
        file.constraints[0].loss.b = Some(3.0);
        assert!(file.to_instance().is_err());
    }

    #[test]
    fn solution_json_fields() {
        let mut inst = scalar_chain(1);
        inst.set_output_loss(0, 0, Some(ScalarLoss::geq(2.0).unwrap())).unwrap();
        let sol = iffbdd_solve(&inst, &SolverConfig::default()).unwrap();
        let text = solution_to_json(&sol).unwrap();
        let file: SolutionFile = serde_json::from_str(&text).unwrap();
        assert_eq!(file.solver, "iffbdd");
        assert!((file.j - 1.0).abs() < 1e-9);
        assert_eq!(file.u_hat.len(), 1);
        assert_eq!(file.z_tilde_hat.len(), 1);
        assert_eq!((file.z_tilde_hat[0].n, file.z_tilde_hat[0].index), (1, 1));
    }

    #[test]
    fn history_csv_round_trip() {
        let inst = generate_appendix_b(2, 1, 1, 4, 1).unwrap();
        let sol = iffbdd_solve(&inst, &SolverConfig::default()).unwrap();
        let mut rows = HistoryRow::from_solution(&sol, Some(1), Some(sol.j), 0.5);
        rows.push(HistoryRow::error(SolverKind::Ibffd, Some(1)));
        let mut buf = Vec::new();
        write_history(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("solver,seed,iter,J,rel_gap_to_oracle,max_violation,elapsed_s\n"));
        assert!(text.ends_with("ibffd,1,error,,,,\n"));
        assert_eq!(read_history(buf.as_slice()).unwrap(), rows);
    }
}
