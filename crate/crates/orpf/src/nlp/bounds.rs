use serde::{Deserialize, Serialize};

use crate::admittance::{build_pibranch, BranchElement, PiBranch};
use crate::error::{Error, Result};
use crate::netmodel::PuNetwork;

/// Bounds derived once per (reduced) network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedBounds {
    /// Apparent-power rating per external grid (pu).
    pub s_max_e: Vec<f64>,
    /// Serial-current bound per branch, lines first, then transformers (pu).
    pub i_con_max: Vec<f64>,
}

/// Sum of the ratings of all elements attached to each external-grid bus.
pub fn derive_smax_e(net: &PuNetwork) -> Result<Vec<f64>> {
    net.ext_grids
        .iter()
        .map(|e| {
            let k = e.bus;
            let vmax = net.buses[k].vmax;
            let mut s = 0.0;
            for l in net.lines.iter().filter(|l| l.from == k || l.to == k) {
                s += vmax * l.imax * l.parallel_count as f64;
            }
            for t in net.trafos.iter().filter(|t| t.lv == k || t.hv == k) {
                s += t.sn * t.parallel_count as f64;
            }
            s += net.loads.iter().filter(|m| m.bus == k).map(|m| m.sn).sum::<f64>();
            s += net.gens.iter().filter(|g| g.bus == k).map(|g| g.sn).sum::<f64>();
            if s > 0.0 {
                Ok(s)
            } else {
                Err(Error::IsolatedExternalGrid { id: e.id.clone() })
            }
        })
        .collect()
}

/// Thermal limit minus the largest possible shunt current at either end.
/// `ratio_min` is the smallest ratio magnitude the branch can take.
pub fn derive_serial_current_bound(
    branch: &PiBranch,
    imax: f64,
    umax_from: f64,
    umax_to: f64,
    ratio_min: f64,
) -> Result<f64> {
    let shunt = (branch.y_p / 2.0).norm() * umax_from.max(umax_to / ratio_min);
    let bound = imax - shunt;
    if bound > 0.0 {
        Ok(bound)
    } else {
        Err(Error::ShuntDominated {
            id: branch.id.clone(),
            shunt,
            imax,
        })
    }
}

pub fn derive_bounds(net: &PuNetwork) -> Result<DerivedBounds> {
    let mut i_con_max = Vec::with_capacity(net.lines.len() + net.trafos.len());
    for l in &net.lines {
        let br = build_pibranch(BranchElement::Line(l), 0.0)?;
        i_con_max.push(derive_serial_current_bound(
            &br,
            l.imax * l.parallel_count as f64,
            net.buses[l.from].vmax,
            net.buses[l.to].vmax,
            1.0,
        )?);
    }
    for t in &net.trafos {
        let br = build_pibranch(BranchElement::Transformer(t), t.tap.neutral as f64)?;
        i_con_max.push(derive_serial_current_bound(
            &br,
            t.imax() * t.parallel_count as f64,
            net.buses[t.lv].vmax,
            net.buses[t.hv].vmax,
            t.nominal_ratio() * t.tap.min_magnitude_factor(),
        )?);
    }
    Ok(DerivedBounds {
        s_max_e: derive_smax_e(net)?,
        i_con_max,
    })
}
