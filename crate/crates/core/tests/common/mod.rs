#![allow(dead_code)]

use perc_core::model::MODEL_IDS;
use perc_core::oracle::{brute_force_children, exact_reach_probability, expected_alive, BRUTE_FORCE_VARIABLES};
use perc_core::{build_matrix, BuildOptions, Lattice, ModelSpec, Percolation, SpaceSpec, StateSpace};

/// 21 parameter points; for two-parameter models `p2` is spread over [0, 1]
/// independently of `p1`.
pub fn grid(arity: usize) -> Vec<Vec<f64>> {
    (0..=20)
        .map(|i| {
            let p = i as f64 / 20.0;
            if arity == 1 {
                vec![p]
            } else {
                vec![p, ((i * 8) % 21) as f64 / 20.0]
            }
        })
        .collect()
}

/// Compares product-form rows against exhaustive enumeration; returns the
/// number of states checked.
pub fn check_states(space: &StateSpace, states: &[usize]) -> Result<usize, String> {
    let matrix = build_matrix(space, &BuildOptions::default()).map_err(|e| e.to_string())?;
    let points = grid(space.model.arity());
    let values: Vec<Vec<f64>> = points.iter().map(|p| matrix.values_at(p)).collect();
    for &i in states {
        let brute = brute_force_children(space, i).map_err(|e| e.to_string())?;
        let (lo, hi) = (matrix.row_ptr[i] as usize, matrix.row_ptr[i + 1] as usize);
        for (pi, params) in points.iter().enumerate() {
            let mut product: Vec<(usize, f64)> = (lo..hi).map(|k| (matrix.cols[k] as usize, values[pi][k])).collect();
            product.retain(|(_, v)| *v != 0.0);
            let mut exhaustive: Vec<(usize, f64)> = brute.iter().map(|(o, p)| (*o, p.eval(params))).collect();
            exhaustive.retain(|(_, v)| *v != 0.0);
            let cols: Vec<usize> = product.iter().chain(&exhaustive).map(|(c, _)| *c).collect();
            for c in cols {
                let a = product.iter().find(|(o, _)| *o == c).map_or(0.0, |x| x.1);
                let b = exhaustive.iter().find(|(o, _)| *o == c).map_or(0.0, |x| x.1);
                if (a - b).abs() > 1e-12 {
                    return Err(format!(
                        "{} {} state {} -> {} at {:?}: product {a} vs brute force {b}",
                        space.model,
                        space.spec,
                        space.render_ordinal(i),
                        space.render_ordinal(c),
                        params
                    ));
                }
            }
        }
    }
    Ok(states.len())
}

pub fn all_2d_states(k: usize) -> Result<usize, String> {
    let mut total = 0;
    for id in MODEL_IDS {
        let model: ModelSpec = id.parse().unwrap();
        if model.lattice == Lattice::Vl3 {
            continue;
        }
        let space = StateSpace::enumerate(&model, SpaceSpec::Plain { k }).map_err(|e| e.to_string())?;
        let all: Vec<usize> = (0..space.len()).collect();
        total += check_states(&space, &all)?;
    }
    Ok(total)
}

/// 200 states of the T(4,3) space. Bond states whose occupied edges exceed
/// the enumeration cap are skipped.
pub fn vl3_sample(id: &str) -> Result<usize, String> {
    let model: ModelSpec = id.parse().unwrap();
    let space = StateSpace::enumerate(&model, SpaceSpec::Triangle { side: 4, focus: 3 }).map_err(|e| e.to_string())?;
    let dirs = space.geometry.num_directions();
    let feasible: Vec<usize> = (0..space.len())
        .filter(|&i| {
            model.percolation == Percolation::Site || space.state(i).0.count_ones() as usize * dirs <= BRUTE_FORCE_VARIABLES
        })
        .collect();
    let stride = (feasible.len() / 200).max(1);
    let sample: Vec<usize> = feasible.iter().copied().step_by(stride).take(200).collect();
    check_states(&space, &sample)
}

pub fn domination_points(arity: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 1..=9 {
        let p = i as f64 / 10.0;
        if arity == 1 {
            out.push(vec![p]);
        } else {
            out.push(vec![p, p]);
            out.push(vec![p, 0.6]);
            out.push(vec![p, 1.0]);
        }
    }
    out
}

/// The Galton-Watson process dominates the cluster, so reaching level n is
/// no likelier than the expected number of particles alive at time n.
/// Returns the number of (model, params, n) triples checked.
pub fn domination() -> Result<usize, String> {
    let mut checked = 0;
    for id in MODEL_IDS {
        let model: ModelSpec = id.parse().unwrap();
        let (spec, depth) = match model.lattice {
            Lattice::Vl3 => (SpaceSpec::Triangle { side: 4, focus: 3 }, 5),
            _ => (SpaceSpec::Plain { k: 4 }, 8),
        };
        let space = StateSpace::enumerate(&model, spec).map_err(|e| e.to_string())?;
        let matrix = build_matrix(&space, &BuildOptions::default()).map_err(|e| e.to_string())?;
        for params in domination_points(model.arity()) {
            let mut prev_reach = 1.0;
            for n in 1..=depth {
                let reach = exact_reach_probability(&model, n, &params).map_err(|e| e.to_string())?;
                let alive = expected_alive(&matrix, &params, n).map_err(|e| e.to_string())?;
                if reach > alive + 1e-9 {
                    return Err(format!("{id} n={n} {params:?}: P(reach) {reach} > E[alive] {alive}"));
                }
                if reach > prev_reach + 1e-12 {
                    return Err(format!("{id} n={n} {params:?}: P(reach) increased with n"));
                }
                prev_reach = reach;
                checked += 1;
            }
        }
    }
    Ok(checked)
}
