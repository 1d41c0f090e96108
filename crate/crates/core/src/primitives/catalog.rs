use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{Axis, Family, Kind, ManipulationPrimitive, ParamBound, ParamName};

pub const CATALOG_SIZE: usize = 13;

const MM: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogConfig {
    pub insert_tolerance_mm: f64,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        Self {
            insert_tolerance_mm: 2.0,
        }
    }
}

fn bound(name: ParamName, low: f64, high: f64, unit: &str) -> ParamBound {
    ParamBound {
        name,
        low,
        high,
        unit: unit.to_string(),
    }
}

fn fixed(entries: &[(ParamName, f64)]) -> BTreeMap<ParamName, f64> {
    entries.iter().copied().collect()
}

/// The 13-primitive set: 5 free-space and 8 in-contact primitives, axes
/// drawn from the task frame's elementary axes.
pub fn build_catalog(cfg: &CatalogConfig) -> Vec<ManipulationPrimitive> {
    use ParamName::*;
    let mut out = Vec::with_capacity(CATALOG_SIZE);
    let mut push = |family, kind, axis: Axis, fx: BTreeMap<ParamName, f64>, learnable: Vec<ParamBound>| {
        let prefix = match family {
            Family::FreeSpace => "free",
            Family::InContact => "contact",
        };
        let id = out.len();
        out.push(ManipulationPrimitive {
            id,
            name: format!("{prefix}-{}({axis})", Kind::symbol(&kind)),
            family,
            kind,
            axis,
            fixed: fx,
            learnable,
        });
    };

    push(
        Family::FreeSpace,
        Kind::TranslateUntilContact,
        Axis::NEG_Z,
        fixed(&[(V, 10.0 * MM), (FThr, 5.0), (T, 2.0)]),
        vec![],
    );
    for axis in [Axis::X, Axis::Y] {
        push(
            Family::FreeSpace,
            Kind::TranslateFixed,
            axis,
            fixed(&[(V, 10.0 * MM), (FThr, 20.0)]),
            vec![bound(D, -10.0 * MM, 10.0 * MM, "m")],
        );
    }
    for axis in [Axis::X, Axis::Y] {
        push(
            Family::FreeSpace,
            Kind::RotateFixed,
            axis,
            fixed(&[(V, 0.1), (FThr, 2.0)]),
            vec![bound(D, -0.1, 0.1, "rad")],
        );
    }
    for axis in [Axis::X, Axis::Y] {
        push(
            Family::InContact,
            Kind::TranslateUntilContact,
            axis,
            fixed(&[(Fd, 8.0)]),
            vec![
                bound(V, -10.0 * MM, 10.0 * MM, "m/s"),
                bound(FThr, 5.0, 12.0, "N"),
                bound(T, 0.1, 2.0, "s"),
            ],
        );
    }
    for axis in [Axis::X, Axis::Y] {
        push(
            Family::InContact,
            Kind::TranslateFixed,
            axis,
            fixed(&[(FThr, 20.0), (Fd, 8.0)]),
            vec![bound(V, 5.0 * MM, 10.0 * MM, "m/s"), bound(D, -10.0 * MM, 10.0 * MM, "m")],
        );
    }
    for axis in [Axis::X, Axis::Y, Axis::Z] {
        push(
            Family::InContact,
            Kind::RotateFixed,
            axis,
            fixed(&[(V, 0.1), (FThr, 2.0), (Fd, 8.0)]),
            vec![bound(D, -0.1, 0.1, "rad")],
        );
    }
    push(
        Family::InContact,
        Kind::Insert,
        Axis::NEG_Z,
        fixed(&[(Eps, cfg.insert_tolerance_mm * MM)]),
        vec![bound(K, 0.01, 0.2, "1"), bound(Fd, 6.0, 15.0, "N"), bound(T, 0.1, 2.0, "s")],
    );
    out
}

/// Human-readable listing of a primitive set: one row per primitive with its
/// fixed values and learnable ranges.
pub fn catalog_table(catalog: &[ManipulationPrimitive]) -> String {
    let mut s = String::from("id\tname\tfamily\tkind\taxis\tfixed\tlearnable\n");
    for mp in catalog {
        let fx: Vec<String> = mp.fixed.iter().map(|(k, v)| format!("{}={v}", k.as_str())).collect();
        let lr: Vec<String> = mp
            .learnable
            .iter()
            .map(|b| format!("{}∈[{}, {}] {}", b.name.as_str(), b.low, b.high, b.unit))
            .collect();
        let _ = writeln!(
            s,
            "{}\t{}\t{:?}\t{:?}\t{}\t{}\t{}",
            mp.id,
            mp.name,
            mp.family,
            mp.kind,
            mp.axis,
            fx.join(" "),
            lr.join(" ")
        );
    }
    s
}
