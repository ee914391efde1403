//! Import of MATPOWER version-2 case files.
//!
//! Only the `bus`, `gen`, `branch` and `gencost` tables are understood, and
//! only the columns this crate consumes. Anything that would change the model
//! (phase shifters, out-of-service elements, piecewise-linear costs, extra
//! tables) is rejected rather than dropped. Machine dynamics are read from a
//! JSON sidecar: an array of `{gen_index, x_d_prime, h, d}` with 1-based
//! `gen_index` following the row order of `mpc.gen`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{default_e_max, default_e_min, Branch, Bus, Case, Generator, Load, OMEGA_SYN_60HZ};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidecarEntry {
    pub gen_index: usize,
    pub x_d_prime: f64,
    pub h: f64,
    #[serde(default)]
    pub d: f64,
}

#[derive(Debug, Clone)]
pub struct ImportOptions {
    /// Dynamics sidecar; defaults to `<stem>_dynamics.json` beside the case.
    pub sidecar: Option<PathBuf>,
    /// Accept polynomial costs with a nonzero quadratic coefficient.
    pub allow_quadratic_cost: bool,
    pub omega_syn: f64,
}

impl Default for ImportOptions {
    fn default() -> Self {
        Self {
            sidecar: None,
            allow_quadratic_cost: false,
            omega_syn: OMEGA_SYN_60HZ,
        }
    }
}

/// Imports a MATPOWER case file plus its dynamics sidecar.
pub fn import_matpower(path: impl AsRef<Path>, options: &ImportOptions) -> Result<Case> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse { path: path.to_path_buf(), line: None, message: format!("cannot read case: {e}") })?;
    let sidecar_path = options.sidecar.clone().unwrap_or_else(|| {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("case");
        path.with_file_name(format!("{stem}_dynamics.json"))
    });
    let sidecar_text = std::fs::read_to_string(&sidecar_path).map_err(|e| Error::Parse {
        path: sidecar_path.clone(),
        line: None,
        message: format!("cannot read dynamics sidecar: {e}"),
    })?;
    let sidecar: Vec<SidecarEntry> = serde_json::from_str(&sidecar_text).map_err(|e| Error::Parse {
        path: sidecar_path.clone(),
        line: Some(e.line()),
        message: e.to_string(),
    })?;
    import_matpower_str(&text, path, &sidecar, options)
}

struct Table {
    line: usize,
    rows: Vec<Vec<f64>>,
}

struct RawCase {
    base_mva: Option<f64>,
    tables: BTreeMap<String, Table>,
}

fn strip_comment(line: &str) -> &str {
    // `%` inside quoted strings only occurs in mpc.version / names we reject anyway
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_raw(text: &str, origin: &Path) -> Result<RawCase> {
    let perr = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line: Some(line),
        message,
    };
    let mut raw = RawCase { base_mva: None, tables: BTreeMap::new() };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, strip_comment(l).trim()));
    while let Some((lineno, line)) = lines.next() {
        if line.is_empty() || line.starts_with("function") {
            continue;
        }
        let Some(rest) = line.strip_prefix("mpc.") else {
            return Err(perr(lineno, format!("unexpected statement `{line}`")));
        };
        let (name, value) = rest
            .split_once('=')
            .ok_or_else(|| perr(lineno, format!("expected assignment in `{line}`")))?;
        let name = name.trim();
        let value = value.trim();
        match name {
            "version" => {
                let v = value.trim_end_matches(';').trim().trim_matches('\'');
                if v != "2" {
                    return Err(Error::UnsupportedFeature(format!("MATPOWER case format version {v}")));
                }
            }
            "baseMVA" => {
                let v = value.trim_end_matches(';').trim();
                raw.base_mva = Some(
                    v.parse()
                        .map_err(|_| perr(lineno, format!("invalid baseMVA `{v}`")))?,
                );
            }
            "bus" | "gen" | "branch" | "gencost" => {
                let mut body = value
                    .strip_prefix('[')
                    .ok_or_else(|| perr(lineno, format!("expected `[` after mpc.{name}")))?
                    .to_string();
                let mut end_line = lineno;
                while !body.contains(']') {
                    let (l, next) = lines
                        .next()
                        .ok_or_else(|| perr(lineno, format!("unterminated table mpc.{name}")))?;
                    body.push('\n');
                    body.push_str(next);
                    end_line = l;
                }
                let inner = &body[..body.find(']').unwrap()];
                let mut rows = Vec::new();
                for (offset, row) in inner.split(['\n', ';']).enumerate() {
                    let row = row.trim();
                    if row.is_empty() {
                        continue;
                    }
                    let values = row
                        .split(|c: char| c.is_whitespace() || c == ',')
                        .filter(|t| !t.is_empty())
                        .map(|t| t.parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| perr(lineno + offset.min(end_line - lineno), format!("mpc.{name}: {e}")))?;
                    rows.push(values);
                }
                raw.tables.insert(name.to_string(), Table { line: lineno, rows });
            }
            other => {
                return Err(Error::UnsupportedFeature(format!("MATPOWER table or field `mpc.{other}`")));
            }
        }
    }
    Ok(raw)
}

fn columns<'a>(table: &'a Table, name: &str, min: usize, origin: &Path) -> Result<&'a [Vec<f64>]> {
    for (i, row) in table.rows.iter().enumerate() {
        if row.len() < min {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: Some(table.line),
                message: format!("mpc.{name} row {} has {} columns, need at least {min}", i + 1, row.len()),
            });
        }
    }
    Ok(&table.rows)
}

fn reject_nonzero_tail(row: &[f64], from: usize, what: &str) -> Result<()> {
    if let Some((j, v)) = row.iter().enumerate().skip(from).find(|(_, v)| **v != 0.0) {
        return Err(Error::UnsupportedFeature(format!("{what}: column {} = {v}", j + 1)));
    }
    Ok(())
}

/// Builds a case from MATPOWER text and already-parsed sidecar entries.
pub fn import_matpower_str(
    text: &str,
    origin: impl AsRef<Path>,
    sidecar: &[SidecarEntry],
    options: &ImportOptions,
) -> Result<Case> {
    let origin = origin.as_ref();
    let raw = parse_raw(text, origin)?;
    let base_mva = raw
        .base_mva
        .ok_or_else(|| Error::validation("baseMVA", "missing mpc.baseMVA"))?;
    let table = |name: &str| {
        raw.tables
            .get(name)
            .ok_or_else(|| Error::validation(name, format!("missing mpc.{name}")))
    };

    let mut buses = Vec::new();
    let mut loads = Vec::new();
    for (i, row) in columns(table("bus")?, "bus", 13, origin)?.iter().enumerate() {
        reject_nonzero_tail(row, 13, &format!("bus row {} OPF result columns", i + 1))?;
        let id = row[0] as usize;
        if row[0] < 1.0 || row[0].fract() != 0.0 {
            return Err(Error::validation(format!("bus[{i}].bus_i"), "bus number must be a positive integer"));
        }
        let kind = row[1] as i64;
        if !(1..=3).contains(&kind) {
            return Err(Error::UnsupportedFeature(format!("bus {id} has type {kind}")));
        }
        buses.push(Bus {
            id,
            v_min: row[12],
            v_max: row[11],
            theta_min: -PI,
            theta_max: PI,
            shunt_g: row[4] / base_mva,
            shunt_b: row[5] / base_mva,
            is_slack: kind == 3,
        });
        if row[2] != 0.0 || row[3] != 0.0 {
            loads.push(Load { bus: id, p: row[2] / base_mva, q: row[3] / base_mva });
        }
    }

    let gen_rows = columns(table("gen")?, "gen", 10, origin)?;
    let cost_rows = columns(table("gencost")?, "gencost", 4, origin)?;
    if cost_rows.len() != gen_rows.len() {
        return Err(Error::UnsupportedFeature(format!(
            "gencost has {} rows for {} generators (reactive costs are not supported)",
            cost_rows.len(),
            gen_rows.len()
        )));
    }
    let mut generators = Vec::new();
    for (i, (row, cost)) in gen_rows.iter().zip(cost_rows).enumerate() {
        reject_nonzero_tail(row, 10, &format!("gen row {} capability/ramp data", i + 1))?;
        if row[7] <= 0.0 {
            return Err(Error::UnsupportedFeature(format!("generator {} is out of service", i + 1)));
        }
        if cost[0] != 2.0 {
            return Err(Error::UnsupportedFeature(format!(
                "gencost row {} uses model {} (only polynomial model 2)",
                i + 1,
                cost[0]
            )));
        }
        let n = cost[3] as usize;
        if cost.len() < 4 + n {
            return Err(Error::validation(format!("gencost[{i}]"), "fewer coefficients than declared"));
        }
        reject_nonzero_tail(cost, 4 + n, &format!("gencost row {} trailing data", i + 1))?;
        let coeffs = &cost[4..4 + n];
        let (c2, c1, c0) = match *coeffs {
            [] => (0.0, 0.0, 0.0),
            [c0] => (0.0, 0.0, c0),
            [c1, c0] => (0.0, c1, c0),
            [c2, c1, c0] => (c2, c1, c0),
            _ => {
                return Err(Error::UnsupportedFeature(format!(
                    "gencost row {} has a degree-{} polynomial",
                    i + 1,
                    n - 1
                )))
            }
        };
        if c2 != 0.0 && !options.allow_quadratic_cost {
            return Err(Error::UnsupportedFeature(format!(
                "gencost row {} has nonzero quadratic term {c2}",
                i + 1
            )));
        }
        let dynamics = sidecar
            .iter()
            .find(|s| s.gen_index == i + 1)
            .ok_or_else(|| Error::validation("sidecar", format!("no dynamics entry for gen_index {}", i + 1)))?;
        generators.push(Generator {
            bus: row[0] as usize,
            p_min: row[9] / base_mva,
            p_max: row[8] / base_mva,
            q_min: row[4] / base_mva,
            q_max: row[3] / base_mva,
            cost: c1,
            cost_quadratic: c2,
            cost_constant: c0,
            x_d_prime: dynamics.x_d_prime,
            h: dynamics.h,
            d: dynamics.d,
            e_min: default_e_min(),
            e_max: default_e_max(),
        });
    }
    if let Some(extra) = sidecar.iter().find(|s| s.gen_index == 0 || s.gen_index > generators.len()) {
        return Err(Error::validation(
            "sidecar",
            format!("gen_index {} does not match any generator", extra.gen_index),
        ));
    }

    let mut branches = Vec::new();
    for (i, row) in columns(table("branch")?, "branch", 11, origin)?.iter().enumerate() {
        reject_nonzero_tail(row, 13, &format!("branch row {} OPF result columns", i + 1))?;
        if row[9] != 0.0 {
            return Err(Error::UnsupportedFeature(format!("branch row {} is a phase shifter", i + 1)));
        }
        if row[10] <= 0.0 {
            return Err(Error::UnsupportedFeature(format!("branch row {} is out of service", i + 1)));
        }
        if row[5] <= 0.0 {
            return Err(Error::UnsupportedFeature(format!("branch row {} has no rateA limit", i + 1)));
        }
        let (angmin, angmax) = if row.len() >= 13 { (row[11], row[12]) } else { (-360.0, 360.0) };
        branches.push(Branch {
            from: row[0] as usize,
            to: row[1] as usize,
            r: row[2],
            x: row[3],
            b_charging: row[4],
            tap: if row[8] == 0.0 { 1.0 } else { row[8] },
            s_max: row[5] / base_mva,
            theta_diff_min: angmin.to_radians(),
            theta_diff_max: angmax.to_radians(),
        });
    }

    let case = Case {
        base_mva,
        omega_syn: options.omega_syn,
        buses,
        branches,
        generators,
        loads,
    };
    case.validate()?;
    Ok(case)
}
