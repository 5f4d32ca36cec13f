//! MATPOWER case files.
//!
//! Only the subset of the m-file syntax needed for a DC model is understood:
//! the `mpc.baseMVA` scalar and the `mpc.bus`, `mpc.gen` and `mpc.branch`
//! matrices. Other assignments (`mpc.version`, `mpc.gencost`, cell arrays
//! such as `mpc.bus_name`) are skipped. Within the matrices only these
//! columns are read, using MATPOWER's 1-based numbering:
//!
//! | block    | columns read                                  |
//! |----------|-----------------------------------------------|
//! | `bus`    | `BUS_I` (1), `PD` (3)                         |
//! | `gen`    | `GEN_BUS` (1), `PG` (2)                       |
//! | `branch` | `F_BUS` (1), `T_BUS` (2), `BR_X` (4), `RATE_A` (6), `TAP` (9) |

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const BUS_I: usize = 0;
const PD: usize = 2;
const GEN_BUS: usize = 0;
const PG: usize = 1;
const F_BUS: usize = 0;
const T_BUS: usize = 1;
const BR_X: usize = 3;
const RATE_A: usize = 5;
const TAP: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    /// Bus number as written in the file.
    pub id: usize,
    /// Nominal demand in MW.
    pub demand: f64,
    pub is_stochastic: bool,
    pub is_deterministic: bool,
}

/// A transmission line or transformer, oriented `from_bus -> to_bus`.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    /// 1-based line index, in file order.
    pub index: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series reactance in p.u.
    pub reactance: f64,
    /// Off-nominal tap ratio; 0 means no transformer.
    pub tap_ratio: f64,
    /// Long-term rating in MW; 0 means unrated.
    pub rating: f64,
}

impl Branch {
    /// Same line with the opposite orientation.
    pub fn flipped(&self) -> Branch {
        Branch {
            from_bus: self.to_bus,
            to_bus: self.from_bus,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: usize,
    /// Nominal real power output in MW.
    pub nominal_output: f64,
}

/// A validated network: connected, with consistent bus references.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCase {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
    base_mva: f64,
}

/// Line susceptance `1/x`, or `1/(tap * x)` for transformers.
pub fn susceptance(branch: &Branch) -> Result<f64> {
    if !(branch.reactance > 0.0) || !branch.reactance.is_finite() {
        return Err(Error::Domain(format!(
            "branch {} has non-positive reactance {}",
            branch.index, branch.reactance
        )));
    }
    if !(branch.tap_ratio >= 0.0) || !branch.tap_ratio.is_finite() {
        return Err(Error::Domain(format!(
            "branch {} has invalid tap ratio {}",
            branch.index, branch.tap_ratio
        )));
    }
    if branch.tap_ratio == 0.0 {
        Ok(1.0 / branch.reactance)
    } else {
        Ok(1.0 / (branch.tap_ratio * branch.reactance))
    }
}

impl GridCase {
    /// Validate and assemble a case from fully specified parts.
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self> {
        let case = GridCase {
            buses,
            branches,
            generators,
            base_mva,
        };
        case.validate()?;
        Ok(case)
    }

    /// Assemble a case from `(bus id, demand MW)` pairs, marking every bus
    /// that hosts a generator as stochastic and all others deterministic.
    pub fn from_tables(
        base_mva: f64,
        buses: &[(usize, f64)],
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self> {
        let gen_buses: HashSet<usize> = generators.iter().map(|g| g.bus).collect();
        let buses = buses
            .iter()
            .map(|&(id, demand)| {
                let stochastic = gen_buses.contains(&id);
                Bus {
                    id,
                    demand,
                    is_stochastic: stochastic,
                    is_deterministic: !stochastic,
                }
            })
            .collect();
        GridCase::new(base_mva, buses, branches, generators)
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    /// Position of each bus id in [`GridCase::buses`].
    pub fn bus_positions(&self) -> HashMap<usize, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(pos, bus)| (bus.id, pos))
            .collect()
    }

    /// A copy of this case with the given 1-based lines reversed.
    pub fn with_flipped_branches(&self, lines: &[usize]) -> Result<GridCase> {
        let branches = self
            .branches
            .iter()
            .map(|br| {
                if lines.contains(&br.index) {
                    br.flipped()
                } else {
                    br.clone()
                }
            })
            .collect();
        GridCase::new(
            self.base_mva,
            self.buses.clone(),
            branches,
            self.generators.clone(),
        )
    }

    fn validate(&self) -> Result<()> {
        if !(self.base_mva > 0.0) || !self.base_mva.is_finite() {
            return Err(Error::Validation(format!(
                "baseMVA must be positive, got {}",
                self.base_mva
            )));
        }
        if self.buses.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 buses, got {}",
                self.buses.len()
            )));
        }
        if self.branches.is_empty() {
            return Err(Error::Validation("need at least 1 branch".into()));
        }

        let mut positions = HashMap::with_capacity(self.buses.len());
        for (pos, bus) in self.buses.iter().enumerate() {
            if positions.insert(bus.id, pos).is_some() {
                return Err(Error::Validation(format!("duplicate bus id {}", bus.id)));
            }
            if bus.is_stochastic == bus.is_deterministic {
                return Err(Error::Validation(format!(
                    "bus {} must be exactly one of stochastic or deterministic",
                    bus.id
                )));
            }
            if !bus.demand.is_finite() {
                return Err(Error::Validation(format!("bus {} has non-finite demand", bus.id)));
            }
        }

        for (k, br) in self.branches.iter().enumerate() {
            if br.index != k + 1 {
                return Err(Error::Validation(format!(
                    "branch at position {} has index {}",
                    k + 1,
                    br.index
                )));
            }
            for end in [br.from_bus, br.to_bus] {
                if !positions.contains_key(&end) {
                    return Err(Error::Validation(format!(
                        "branch {} references unknown bus {}",
                        br.index, end
                    )));
                }
            }
            if br.from_bus == br.to_bus {
                return Err(Error::Validation(format!(
                    "branch {} is a self-loop at bus {}",
                    br.index, br.from_bus
                )));
            }
            if !(br.rating >= 0.0) {
                return Err(Error::Validation(format!(
                    "branch {} has negative rating {}",
                    br.index, br.rating
                )));
            }
            susceptance(br).map_err(|e| Error::Validation(e.to_string()))?;
        }

        for gen in &self.generators {
            let Some(&pos) = positions.get(&gen.bus) else {
                return Err(Error::Validation(format!(
                    "generator references unknown bus {}",
                    gen.bus
                )));
            };
            if !self.buses[pos].is_stochastic {
                return Err(Error::Validation(format!(
                    "generator bus {} is not marked stochastic",
                    gen.bus
                )));
            }
            if !gen.nominal_output.is_finite() {
                return Err(Error::Validation(format!(
                    "generator at bus {} has non-finite output",
                    gen.bus
                )));
            }
        }

        let edges: Vec<(usize, usize)> = self
            .branches
            .iter()
            .map(|br| (positions[&br.from_bus], positions[&br.to_bus]))
            .collect();
        let components = count_components(self.buses.len(), &edges);
        if components != 1 {
            return Err(Error::Validation(format!(
                "network graph has {components} connected components"
            )));
        }
        Ok(())
    }

    /// Render the case in a canonical MATPOWER subset that [`parse_case`]
    /// reads back to an identical `GridCase`. Columns that are not read are
    /// written as zero.
    pub fn to_matpower(&self) -> String {
        let mut out = String::new();
        out.push_str("function mpc = canonical\n");
        out.push_str("mpc.version = '2';\n");
        let _ = writeln!(out, "mpc.baseMVA = {};", self.base_mva);

        out.push_str("%\tbus_i\ttype\tPd\nmpc.bus = [\n");
        for bus in &self.buses {
            let _ = writeln!(out, "\t{}\t0\t{};", bus.id, bus.demand);
        }
        out.push_str("];\n");

        out.push_str("%\tbus\tPg\nmpc.gen = [\n");
        for gen in &self.generators {
            let _ = writeln!(out, "\t{}\t{};", gen.bus, gen.nominal_output);
        }
        out.push_str("];\n");

        out.push_str("%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\nmpc.branch = [\n");
        for br in &self.branches {
            let _ = writeln!(
                out,
                "\t{}\t{}\t0\t{}\t0\t{}\t0\t0\t{};",
                br.from_bus, br.to_bus, br.reactance, br.rating, br.tap_ratio
            );
        }
        out.push_str("];\n");
        out
    }
}

/// Number of connected components, by union-find.
pub(crate) fn count_components(nodes: usize, edges: &[(usize, usize)]) -> usize {
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut parent: Vec<usize> = (0..nodes).collect();
    let mut components = nodes;
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    components
}

/// One row of a matrix block, remembering where it came from.
#[derive(Debug)]
struct Row {
    line: usize,
    values: Vec<f64>,
}

#[derive(Debug, Default)]
struct Blocks {
    base_mva: Option<(usize, f64)>,
    matrices: HashMap<String, (usize, Vec<Row>)>,
}

enum State {
    Top,
    Matrix {
        name: String,
        start: usize,
        rows: Vec<Row>,
        current: Option<Row>,
    },
    Cell {
        start: usize,
    },
}

fn strip_comment(line: &str) -> &str {
    // `%` inside a quoted string would be mis-read, but the blocks read
    // here never contain strings.
    match line.find('%') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_number(token: &str, line: usize) -> Result<f64> {
    let value = match token {
        "Inf" | "inf" | "+Inf" => f64::INFINITY,
        "-Inf" | "-inf" => f64::NEG_INFINITY,
        _ => token.parse::<f64>().map_err(|_| Error::Parse {
            line,
            message: format!("invalid number {token:?}"),
        })?,
    };
    Ok(value)
}

/// Feed matrix text (between `[` and `]`) into the row accumulator.
fn push_matrix_text(
    text: &str,
    line: usize,
    rows: &mut Vec<Row>,
    current: &mut Option<Row>,
) -> Result<()> {
    let mut segments = text.split(';').peekable();
    while let Some(segment) = segments.next() {
        for token in segment
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
        {
            let value = parse_number(token, line)?;
            current
                .get_or_insert_with(|| Row {
                    line,
                    values: Vec::new(),
                })
                .values
                .push(value);
        }
        // A `;` closes the row; so does the end of a physical line.
        if segments.peek().is_some() {
            if let Some(row) = current.take() {
                rows.push(row);
            }
        }
    }
    Ok(())
}

fn scan_blocks(text: &str) -> Result<Blocks> {
    let mut blocks = Blocks::default();
    let mut state = State::Top;

    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = strip_comment(raw).trim();

        state = match state {
            State::Top => {
                if line.is_empty() || line.starts_with("function") {
                    State::Top
                } else if let Some(rest) = line.strip_prefix("mpc.") {
                    let Some((name, rhs)) = rest.split_once('=') else {
                        return Err(Error::Parse {
                            line: line_no,
                            message: "expected `mpc.<field> = ...`".into(),
                        });
                    };
                    let name = name.trim().to_string();
                    let rhs = rhs.trim();
                    if let Some(body) = rhs.strip_prefix('[') {
                        let mut rows = Vec::new();
                        let mut current = None;
                        match body.split_once(']') {
                            Some((inner, _)) => {
                                push_matrix_text(inner, line_no, &mut rows, &mut current)?;
                                rows.extend(current.take());
                                blocks.matrices.insert(name, (line_no, rows));
                                State::Top
                            }
                            None => {
                                push_matrix_text(body, line_no, &mut rows, &mut current)?;
                                rows.extend(current.take());
                                State::Matrix {
                                    name,
                                    start: line_no,
                                    rows,
                                    current: None,
                                }
                            }
                        }
                    } else if rhs.starts_with('{') {
                        if rhs.contains('}') {
                            State::Top
                        } else {
                            State::Cell { start: line_no }
                        }
                    } else {
                        if name == "baseMVA" {
                            let value = rhs.trim_end_matches(';').trim();
                            blocks.base_mva = Some((line_no, parse_number(value, line_no)?));
                        }
                        State::Top
                    }
                } else {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("unexpected statement {line:?}"),
                    });
                }
            }
            State::Matrix {
                name,
                start,
                mut rows,
                mut current,
            } => match line.split_once(']') {
                Some((inner, _)) => {
                    push_matrix_text(inner, line_no, &mut rows, &mut current)?;
                    rows.extend(current.take());
                    blocks.matrices.insert(name, (start, rows));
                    State::Top
                }
                None => {
                    push_matrix_text(line, line_no, &mut rows, &mut current)?;
                    rows.extend(current.take());
                    State::Matrix {
                        name,
                        start,
                        rows,
                        current,
                    }
                }
            },
            State::Cell { start } => {
                if line.contains('}') {
                    State::Top
                } else {
                    State::Cell { start }
                }
            }
        };
    }

    match state {
        State::Top => Ok(blocks),
        State::Matrix { name, start, .. } => Err(Error::Parse {
            line: start,
            message: format!("matrix `mpc.{name}` is never closed with `]`"),
        }),
        State::Cell { start } => Err(Error::Parse {
            line: start,
            message: "cell array is never closed with `}`".into(),
        }),
    }
}

fn require_block<'a>(blocks: &'a Blocks, name: &str, total_lines: usize) -> Result<&'a [Row]> {
    blocks
        .matrices
        .get(name)
        .map(|(_, rows)| rows.as_slice())
        .ok_or_else(|| Error::Parse {
            line: total_lines,
            message: format!("missing `mpc.{name}` block"),
        })
}

fn column(row: &Row, col: usize, block: &str, what: &str) -> Result<f64> {
    row.values.get(col).copied().ok_or_else(|| Error::Parse {
        line: row.line,
        message: format!(
            "`{block}` row has {} columns, missing column {} ({what})",
            row.values.len(),
            col + 1
        ),
    })
}

fn as_id(value: f64, row: &Row, what: &str) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 && value < usize::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(Error::Parse {
            line: row.line,
            message: format!("{what} must be a positive integer, got {value}"),
        })
    }
}

/// Parse MATPOWER m-file text into a validated [`GridCase`].
pub fn parse_case(text: &str) -> Result<GridCase> {
    let blocks = scan_blocks(text)?;
    let total_lines = text.lines().count();

    let (_, base_mva) = blocks.base_mva.ok_or_else(|| Error::Parse {
        line: total_lines,
        message: "missing `mpc.baseMVA`".into(),
    })?;

    let mut buses = Vec::new();
    for row in require_block(&blocks, "bus", total_lines)? {
        let id = as_id(column(row, BUS_I, "bus", "BUS_I")?, row, "BUS_I")?;
        let demand = column(row, PD, "bus", "PD")?;
        buses.push((id, demand));
    }

    let mut generators = Vec::new();
    for row in require_block(&blocks, "gen", total_lines)? {
        let bus = as_id(column(row, GEN_BUS, "gen", "GEN_BUS")?, row, "GEN_BUS")?;
        let nominal_output = column(row, PG, "gen", "PG")?;
        generators.push(Generator {
            bus,
            nominal_output,
        });
    }

    let mut branches = Vec::new();
    for (k, row) in require_block(&blocks, "branch", total_lines)?
        .iter()
        .enumerate()
    {
        branches.push(Branch {
            index: k + 1,
            from_bus: as_id(column(row, F_BUS, "branch", "F_BUS")?, row, "F_BUS")?,
            to_bus: as_id(column(row, T_BUS, "branch", "T_BUS")?, row, "T_BUS")?,
            reactance: column(row, BR_X, "branch", "BR_X")?,
            rating: column(row, RATE_A, "branch", "RATE_A")?,
            tap_ratio: column(row, TAP, "branch", "TAP")?,
        });
    }

    GridCase::from_tables(base_mva, &buses, branches, generators)
}

/// Read and parse a case file from disk.
pub fn read_case(path: impl AsRef<Path>) -> Result<GridCase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_case(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "\
function mpc = two_bus
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0 0;
    2 1 50 0;
];
mpc.gen = [
    1 50;
];
mpc.branch = [
    1 2 0 0.5 0 120 0 0 0;
];
";

    #[test]
    fn parses_minimal_case() {
        let case = parse_case(TWO_BUS).unwrap();
        assert_eq!(case.num_buses(), 2);
        assert_eq!(case.num_branches(), 1);
        assert_eq!(case.base_mva(), 100.0);
        assert!(case.buses()[0].is_stochastic);
        assert!(case.buses()[1].is_deterministic);
        assert_eq!(case.branches()[0].rating, 120.0);
        assert_eq!(case.branches()[0].reactance, 0.5);
    }

    #[test]
    fn rows_split_on_semicolons_and_newlines() {
        let text = "mpc.baseMVA = 10;\nmpc.bus = [1 1 0; 2 1 5\n 3 1 7];\nmpc.gen = [1 12];\n\
                    mpc.branch = [1 2 0 0.1 0 0 0 0 0; 2 3 0 0.2 0 0 0 0 1.5];\n";
        let case = parse_case(text).unwrap();
        assert_eq!(case.num_buses(), 3);
        assert_eq!(case.buses()[2].demand, 7.0);
        assert_eq!(case.branches()[1].tap_ratio, 1.5);
    }

    #[test]
    fn skips_unread_blocks_and_comments() {
        let text = format!(
            "{TWO_BUS}% trailing comment\nmpc.gencost = [\n 2 0 0 3 0.01 0.3 0.2;\n];\n\
             mpc.bus_name = {{\n 'A';\n 'B';\n}};\n"
        );
        assert!(parse_case(&text).is_ok());
    }

    #[test]
    fn unknown_bus_reference_is_rejected() {
        let text = TWO_BUS.replace("1 2 0 0.5", "1 99 0 0.5");
        let err = parse_case(&text).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("99")), "{err}");
    }

    #[test]
    fn duplicate_bus_is_rejected() {
        let text = TWO_BUS.replace("2 1 50 0", "1 1 50 0");
        assert!(matches!(parse_case(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let text = TWO_BUS.replace("    2 1 50 0;\n", "    2 1 50 0;\n    3 1 0 0;\n");
        let err = parse_case(&text).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("components")));
    }

    #[test]
    fn missing_column_reports_line() {
        let text = TWO_BUS.replace("1 2 0 0.5 0 120 0 0 0;", "1 2 0 0.5;");
        match parse_case(&text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 11);
                assert!(message.contains("RATE_A"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_line() {
        let text = TWO_BUS.replace("2 1 50 0", "2 1 fifty 0");
        assert!(matches!(parse_case(&text), Err(Error::Parse { line: 5, .. })));
    }

    #[test]
    fn unterminated_block() {
        let text = "mpc.baseMVA = 1;\nmpc.bus = [\n 1 1 0;\n";
        assert!(matches!(parse_case(text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn missing_block() {
        let text = "mpc.baseMVA = 1;\nmpc.bus = [1 1 0; 2 1 0];\nmpc.gen = [1 1];\n";
        let err = parse_case(text).unwrap_err();
        assert!(err.to_string().contains("branch"));
    }

    #[test]
    fn susceptance_formula() {
        let mut br = Branch {
            index: 1,
            from_bus: 1,
            to_bus: 2,
            reactance: 0.5,
            tap_ratio: 0.0,
            rating: 0.0,
        };
        assert_eq!(susceptance(&br).unwrap(), 2.0);
        br.tap_ratio = 2.0;
        assert_eq!(susceptance(&br).unwrap(), 1.0);
        br.reactance = 0.0;
        br.tap_ratio = 0.0;
        assert!(matches!(susceptance(&br), Err(Error::Domain(_))));
    }

    #[test]
    fn multiple_generators_on_one_bus() {
        let text = TWO_BUS.replace("    1 50;\n", "    1 50;\n    1 25;\n");
        let case = parse_case(&text).unwrap();
        assert_eq!(case.generators().len(), 2);
        assert!(case.buses()[0].is_stochastic);
    }
}
