//! From-scratch automatic differentiation: Taylor-mode jets for input
//! derivatives, plus a reverse-mode tape over batched jets for parameter
//! gradients.
//!
//! The PDE residuals need `u`, `u_x`, ..., `u_xxxx`, `u_t` of a network with
//! respect to its *physical* inputs; those come from forward jet passes, one
//! per direction, with the input-normalization chain rule folded into the jet
//! seed. Training needs `d(loss)/d(theta)`; that comes from the [`tape`]
//! module, which replays the same arithmetic on whole batches and runs one
//! reverse sweep.

pub mod jet;
pub mod tape;

pub use jet::{jet_lift, jet_tanh, Jet, MAX_ORDER};

use crate::error::Result;
use crate::network::MlpParams;

/// Input derivatives of one network evaluated at one point.
///
/// Slots beyond the requested orders are zero-filled. For problems posed on
/// `(x, y)` rectangles the second coordinate plays the role of `t`.
#[derive(Clone, Copy, Debug, Default)]
pub struct DerivativeBundle {
    pub u: f64,
    pub du_dx: f64,
    pub d2u_dx2: f64,
    pub d3u_dx3: f64,
    pub d4u_dx4: f64,
    pub du_dt: f64,
    pub d2u_dt2: f64,
}

/// Evaluates the network through jet arithmetic in one input direction.
///
/// `seeds` carries one jet per input coordinate; exactly one of them should be
/// seeded as the active direction.
pub fn mlp_jet_eval(params: &MlpParams, seeds: &[Jet]) -> Jet {
    assert_eq!(seeds.len(), params.dim_in(), "seed count mismatch");
    let order = seeds[0].order();
    let mut z: Vec<Jet> = seeds.to_vec();
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter().enumerate() {
        let mut out = Vec::with_capacity(layer.b.len());
        for r in 0..layer.b.len() {
            let mut acc = Jet::constant(layer.b[r], order);
            let row = layer.w.row(r);
            for (c, zc) in z.iter().enumerate() {
                acc = acc + zc.scale(row[c]);
            }
            if l != last {
                acc = acc.tanh();
            }
            out.push(acc);
        }
        z = out;
    }
    debug_assert_eq!(z.len(), 1, "scalar-output network expected");
    z[0]
}

/// Computes the derivative bundle of `params` at `point` with jet passes of
/// order `x_order` along the first coordinate and `t_order` along the second.
///
/// Derivatives are with respect to the physical coordinates: the normalization
/// `z = (x - mu)/sigma` is folded in by seeding the active direction with
/// slope `1/sigma`. Orders above [`MAX_ORDER`] are rejected.
pub fn pde_derivatives(
    params: &MlpParams,
    point: &[f64],
    x_order: usize,
    t_order: usize,
) -> Result<DerivativeBundle> {
    use crate::error::Error;
    let dim = params.dim_in();
    if point.len() != dim {
        return Err(Error::InvalidArg(format!(
            "point has {} coordinates, network expects {dim}",
            point.len()
        )));
    }
    if x_order > MAX_ORDER || t_order > MAX_ORDER {
        return Err(Error::InvalidArg(format!(
            "derivative orders ({x_order}, {t_order}) exceed maximum {MAX_ORDER}"
        )));
    }
    if t_order > 0 && dim < 2 {
        return Err(Error::InvalidArg(
            "second-coordinate derivatives need a two-input network".into(),
        ));
    }

    let normalized =
        |d: usize| (point[d] - params.norm.mu[d]) / params.norm.sigma[d];

    let mut bundle = DerivativeBundle::default();

    // pass along the first coordinate
    {
        let order = x_order;
        let seeds: Vec<Jet> = (0..dim)
            .map(|d| {
                if d == 0 {
                    Jet::var_scaled(normalized(0), 1.0 / params.norm.sigma[0], order)
                } else {
                    Jet::constant(normalized(d), order)
                }
            })
            .collect();
        let out = mlp_jet_eval(params, &seeds);
        bundle.u = out.value();
        if order >= 1 {
            bundle.du_dx = out.deriv(1);
        }
        if order >= 2 {
            bundle.d2u_dx2 = out.deriv(2);
        }
        if order >= 3 {
            bundle.d3u_dx3 = out.deriv(3);
        }
        if order >= 4 {
            bundle.d4u_dx4 = out.deriv(4);
        }
    }

    // pass along the second coordinate
    if t_order > 0 {
        let order = t_order;
        let seeds: Vec<Jet> = (0..dim)
            .map(|d| {
                if d == 1 {
                    Jet::var_scaled(normalized(1), 1.0 / params.norm.sigma[1], order)
                } else {
                    Jet::constant(normalized(d), order)
                }
            })
            .collect();
        let out = mlp_jet_eval(params, &seeds);
        bundle.du_dt = out.deriv(1);
        if order >= 2 {
            bundle.d2u_dt2 = out.deriv(2);
        }
    }

    Ok(bundle)
}
