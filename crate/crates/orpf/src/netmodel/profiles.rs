//! Time-series profiles: delimited text with one row per time step and
//! columns named `<type>.<id>.<quantity>`.
//!
//! Recognised columns:
//!
//! | column                  | unit |
//! |-------------------------|------|
//! | `gen.<id>.p_mw`         | MW   |
//! | `load.<id>.p_mw`        | MW   |
//! | `load.<id>.q_mvar`      | MVAr |
//! | `ext_grid.<id>.vm_pu`   | pu   |
//! | `ext_grid.<id>.va_rad`  | rad  |
//!
//! A leading `step` or `time` column is accepted as a label and ignored.
//! Elements without a column keep the value stored in the network file.
//! Case ids are zero-based row indices.

use std::io::Read;
use std::path::Path;

use super::{Network, StudyCase};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    GenP,
    LoadP,
    LoadQ,
    ExtVm,
    ExtVa,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub element: String,
    pub quantity: Quantity,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Profiles {
    pub steps: usize,
    pub columns: Vec<Column>,
}

fn parse_header(name: &str) -> Result<Option<(String, Quantity)>> {
    let name = name.trim();
    if name == "step" || name == "time" {
        return Ok(None);
    }
    let bad = || Error::Parse {
        what: "profiles header".into(),
        msg: format!("unrecognised column '{name}'"),
    };
    let (kind, rest) = name.split_once('.').ok_or_else(bad)?;
    let (id, quantity) = rest.rsplit_once('.').ok_or_else(bad)?;
    if id.is_empty() {
        return Err(bad());
    }
    let q = match (kind, quantity) {
        ("gen", "p_mw") => Quantity::GenP,
        ("load", "p_mw") => Quantity::LoadP,
        ("load", "q_mvar") => Quantity::LoadQ,
        ("ext_grid", "vm_pu") => Quantity::ExtVm,
        ("ext_grid", "va_rad") => Quantity::ExtVa,
        _ => return Err(bad()),
    };
    Ok(Some((id.to_string(), q)))
}

impl Profiles {
    pub fn parse<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut slots = Vec::with_capacity(headers.len());
        let mut columns: Vec<Column> = Vec::new();
        for h in headers.iter() {
            match parse_header(h)? {
                None => slots.push(None),
                Some((element, quantity)) => {
                    if columns
                        .iter()
                        .any(|c| c.element == element && c.quantity == quantity)
                    {
                        return Err(Error::Parse {
                            what: "profiles header".into(),
                            msg: format!("duplicate column '{h}'"),
                        });
                    }
                    slots.push(Some(columns.len()));
                    columns.push(Column {
                        element,
                        quantity,
                        values: Vec::new(),
                    });
                }
            }
        }
        let mut steps = 0;
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != slots.len() {
                return Err(Error::Parse {
                    what: "profiles".into(),
                    msg: format!("row {row} has {} fields, expected {}", record.len(), slots.len()),
                });
            }
            for (field, slot) in record.iter().zip(&slots) {
                if let Some(c) = slot {
                    let v: f64 = field.parse().map_err(|_| Error::Parse {
                        what: "profiles".into(),
                        msg: format!("row {row}: '{field}' is not a number"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            what: "profiles".into(),
                            msg: format!("row {row}: non-finite value"),
                        });
                    }
                    columns[*c].values.push(v);
                }
            }
            steps += 1;
        }
        Ok(Profiles { steps, columns })
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::parse(text.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(file))
    }

    /// Checks that every column names an element of `net`.
    pub fn check(&self, net: &Network) -> Result<()> {
        for c in &self.columns {
            let known = match c.quantity {
                Quantity::GenP => net.gens.iter().any(|g| g.id == c.element),
                Quantity::LoadP | Quantity::LoadQ => net.loads.iter().any(|m| m.id == c.element),
                Quantity::ExtVm | Quantity::ExtVa => {
                    net.ext_grids.iter().any(|e| e.id == c.element)
                }
            };
            if !known {
                return Err(Error::Parse {
                    what: "profiles".into(),
                    msg: format!("column references unknown element '{}'", c.element),
                });
            }
        }
        Ok(())
    }

    /// Builds the study case of row `step`; elements without a column keep
    /// their network-file value.
    pub fn case(&self, net: &Network, step: usize) -> Result<StudyCase> {
        if step >= self.steps {
            return Err(Error::Case {
                case: step,
                msg: format!("profiles hold only {} steps", self.steps),
            });
        }
        self.check(net)?;
        let mut case = StudyCase::from_defaults(net);
        case.id = step;
        for c in &self.columns {
            let v = c.values[step];
            let pos = |ids: &mut dyn Iterator<Item = &String>| ids.enumerate().find(|(_, id)| **id == c.element).map(|(i, _)| i);
            match c.quantity {
                Quantity::GenP => {
                    let i = pos(&mut net.gens.iter().map(|g| &g.id)).unwrap();
                    case.p_g[i] = v;
                }
                Quantity::LoadP => {
                    let i = pos(&mut net.loads.iter().map(|g| &g.id)).unwrap();
                    case.p_m[i] = v;
                }
                Quantity::LoadQ => {
                    let i = pos(&mut net.loads.iter().map(|g| &g.id)).unwrap();
                    case.q_m[i] = v;
                }
                Quantity::ExtVm => {
                    let i = pos(&mut net.ext_grids.iter().map(|g| &g.id)).unwrap();
                    case.u_e[i].vm_pu = v;
                }
                Quantity::ExtVa => {
                    let i = pos(&mut net.ext_grids.iter().map(|g| &g.id)).unwrap();
                    case.u_e[i].va = v;
                }
            }
        }
        case.validate(net)?;
        Ok(case)
    }
}
