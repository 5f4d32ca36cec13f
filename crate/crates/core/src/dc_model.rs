//! The DC power-flow map from nodal injections to line flows.
//!
//! With incidence matrix `C` (m x b), line susceptances `B = diag(beta)` and
//! weighted Laplacian `L = C^T B C`, any injection vector `x` induces flows
//! `f = B C L^+ x`. The PTDF matrix `V = B C L^+` is split column-wise into
//! the stochastic buses (`V_s`) and the deterministic ones (`V_d`), so that
//! `F = V_s P + V_d a`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::case_io::{susceptance, GridCase};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DcModel {
    incidence: DMatrix<f64>,
    susceptances: DVector<f64>,
    laplacian: DMatrix<f64>,
    laplacian_pinv: DMatrix<f64>,
    ptdf: DMatrix<f64>,
    v_s: DMatrix<f64>,
    v_d: DMatrix<f64>,
    stochastic_buses: Vec<usize>,
    deterministic_buses: Vec<usize>,
    det_injections: DVector<f64>,
    nominal_stochastic: DVector<f64>,
    stochastic_generation: DVector<f64>,
    deterministic_flows: DVector<f64>,
    nominal_flows: DVector<f64>,
    ratings: DVector<f64>,
    base_mva: f64,
}

/// Moore-Penrose pseudoinverse of a connected-graph Laplacian.
///
/// Eigenvalues below `b * eps * lambda_max` are treated as zero; exactly one
/// such eigenvalue (the all-ones direction) is expected.
pub fn pinv_laplacian(laplacian: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let b = laplacian.nrows();
    if b == 0 || laplacian.ncols() != b {
        return Err(Error::Dimension {
            expected: b,
            actual: laplacian.ncols(),
            context: "Laplacian must be square",
        });
    }
    let eigen = SymmetricEigen::new(laplacian.clone());
    let lambda_max = eigen.eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tol = b as f64 * f64::EPSILON * lambda_max;

    let zero_count = eigen.eigenvalues.iter().filter(|v| v.abs() <= tol).count();
    if zero_count != 1 {
        return Err(Error::Connectivity(format!(
            "Laplacian has {zero_count} zero eigenvalues (tolerance {tol:e}), expected exactly 1"
        )));
    }

    let mut pinv = DMatrix::zeros(b, b);
    for (k, &value) in eigen.eigenvalues.iter().enumerate() {
        if value.abs() <= tol {
            continue;
        }
        let v = eigen.eigenvectors.column(k);
        pinv += (v * v.transpose()) / value;
    }
    // The eigen-sum is symmetric in exact arithmetic only.
    let pinv = (&pinv + pinv.transpose()) * 0.5;
    Ok(pinv)
}

impl DcModel {
    /// Build the linear flow model of a validated case.
    pub fn build(case: &GridCase) -> Result<Self> {
        let b = case.num_buses();
        let m = case.num_branches();
        let positions = case.bus_positions();
        let base = case.base_mva();

        let mut incidence = DMatrix::zeros(m, b);
        let mut susceptances = DVector::zeros(m);
        for (l, br) in case.branches().iter().enumerate() {
            incidence[(l, positions[&br.from_bus])] = 1.0;
            incidence[(l, positions[&br.to_bus])] = -1.0;
            susceptances[l] = susceptance(br)?;
        }

        let weighted = DMatrix::from_fn(m, b, |l, i| susceptances[l] * incidence[(l, i)]);
        let laplacian = incidence.transpose() * &weighted;
        let laplacian_pinv = pinv_laplacian(&laplacian)?;
        let ptdf = &weighted * &laplacian_pinv;

        let mut generation = vec![0.0; b];
        for gen in case.generators() {
            generation[positions[&gen.bus]] += gen.nominal_output;
        }

        let (stochastic_buses, deterministic_buses): (Vec<usize>, Vec<usize>) =
            (0..b).partition(|&i| case.buses()[i].is_stochastic);

        let v_s = ptdf.select_columns(&stochastic_buses);
        let v_d = ptdf.select_columns(&deterministic_buses);

        let net = |i: usize| (generation[i] - case.buses()[i].demand) / base;
        let nominal_stochastic =
            DVector::from_iterator(stochastic_buses.len(), stochastic_buses.iter().map(|&i| net(i)));
        let stochastic_generation = DVector::from_iterator(
            stochastic_buses.len(),
            stochastic_buses.iter().map(|&i| generation[i] / base),
        );
        let det_injections = DVector::from_iterator(
            deterministic_buses.len(),
            deterministic_buses.iter().map(|&i| net(i)),
        );

        let deterministic_flows = &v_d * &det_injections;
        let nominal_flows = &v_s * &nominal_stochastic + &deterministic_flows;
        let ratings =
            DVector::from_iterator(m, case.branches().iter().map(|br| br.rating / base));

        Ok(DcModel {
            incidence,
            susceptances,
            laplacian,
            laplacian_pinv,
            ptdf,
            v_s,
            v_d,
            stochastic_buses,
            deterministic_buses,
            det_injections,
            nominal_stochastic,
            stochastic_generation,
            deterministic_flows,
            nominal_flows,
            ratings,
            base_mva: base,
        })
    }

    pub fn num_lines(&self) -> usize {
        self.ptdf.nrows()
    }

    pub fn num_buses(&self) -> usize {
        self.ptdf.ncols()
    }

    /// Number of stochastic buses `d`.
    pub fn num_stochastic(&self) -> usize {
        self.v_s.ncols()
    }

    pub fn incidence(&self) -> &DMatrix<f64> {
        &self.incidence
    }

    pub fn susceptances(&self) -> &DVector<f64> {
        &self.susceptances
    }

    pub fn susceptance_diag(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.susceptances)
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn laplacian_pinv(&self) -> &DMatrix<f64> {
        &self.laplacian_pinv
    }

    pub fn ptdf(&self) -> &DMatrix<f64> {
        &self.ptdf
    }

    pub fn v_s(&self) -> &DMatrix<f64> {
        &self.v_s
    }

    pub fn v_d(&self) -> &DMatrix<f64> {
        &self.v_d
    }

    /// Bus positions (into `GridCase::buses`) of the stochastic buses, in
    /// column order of `V_s`.
    pub fn stochastic_buses(&self) -> &[usize] {
        &self.stochastic_buses
    }

    pub fn deterministic_buses(&self) -> &[usize] {
        &self.deterministic_buses
    }

    /// Deterministic net injections `a` (p.u.).
    pub fn det_injections(&self) -> &DVector<f64> {
        &self.det_injections
    }

    /// Nominal net stochastic injections `mu` = generation - demand (p.u.).
    pub fn nominal_stochastic(&self) -> &DVector<f64> {
        &self.nominal_stochastic
    }

    /// Nominal gross generation at each stochastic bus (p.u.).
    pub fn stochastic_generation(&self) -> &DVector<f64> {
        &self.stochastic_generation
    }

    /// `V_d a`, the flow contribution of the deterministic buses.
    pub fn deterministic_flows(&self) -> &DVector<f64> {
        &self.deterministic_flows
    }

    /// `nu = V_s mu + V_d a`.
    pub fn nominal_flows(&self) -> &DVector<f64> {
        &self.nominal_flows
    }

    /// Per-line `RATE_A` in p.u.; zero for unrated lines.
    pub fn ratings(&self) -> &DVector<f64> {
        &self.ratings
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    /// Line flows `V_s p + V_d a` for one stochastic injection vector.
    pub fn flows(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        if p.len() != self.num_stochastic() {
            return Err(Error::Dimension {
                expected: self.num_stochastic(),
                actual: p.len(),
                context: "stochastic injection vector",
            });
        }
        Ok(&self.v_s * p + &self.deterministic_flows)
    }

    /// Flows for every row of an `n x d` injection matrix, as an `n x m`
    /// matrix.
    pub fn flows_batch(&self, injections: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if injections.ncols() != self.num_stochastic() {
            return Err(Error::Dimension {
                expected: self.num_stochastic(),
                actual: injections.ncols(),
                context: "injection sample columns",
            });
        }
        let mut out = injections * self.v_s.transpose();
        for mut row in out.row_iter_mut() {
            row += self.deterministic_flows.transpose();
        }
        Ok(out)
    }

    /// Flows for a full nodal injection vector `x` (length b), `B C L^+ x`.
    pub fn flows_from_nodal(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.num_buses() {
            return Err(Error::Dimension {
                expected: self.num_buses(),
                actual: x.len(),
                context: "nodal injection vector",
            });
        }
        Ok(&self.ptdf * x)
    }

    /// Write `C`, `L`, `L^+`, `V` and `nu` as `row,col,value` CSV files
    /// (1-based indices) into `dir`.
    pub fn write_debug_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let nu = DMatrix::from_column_slice(self.num_lines(), 1, self.nominal_flows.as_slice());
        for (name, matrix) in [
            ("incidence.csv", &self.incidence),
            ("laplacian.csv", &self.laplacian),
            ("laplacian_pinv.csv", &self.laplacian_pinv),
            ("ptdf.csv", &self.ptdf),
            ("nominal_flows.csv", &nu),
        ] {
            write_matrix_csv(&dir.join(name), matrix)?;
        }
        Ok(())
    }
}

fn write_matrix_csv(path: &Path, matrix: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "row,col,value").map_err(io)?;
    for i in 0..matrix.nrows() {
        for j in 0..matrix.ncols() {
            writeln!(out, "{},{},{}", i + 1, j + 1, matrix[(i, j)]).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}
