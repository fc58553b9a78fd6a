//! Local-density exchange-correlation.

use std::f64::consts::PI;

use crate::grid::ScalarField;
use crate::par;

/// Pointwise exchange-correlation model: energy per electron ε(ρ) and
/// potential μ(ρ) = d(ρε)/dρ.
pub trait ExchangeCorrelation: Sync {
    fn eval(&self, rho: f64) -> (f64, f64);
}

/// Slater exchange: ε_x = −(3/4)(3/π)^{1/3} ρ^{1/3}.
#[derive(Clone, Copy, Debug, Default)]
pub struct SlaterExchange;

impl ExchangeCorrelation for SlaterExchange {
    #[inline]
    fn eval(&self, rho: f64) -> (f64, f64) {
        let c = (3.0 / PI).cbrt();
        let r13 = rho.max(0.0).cbrt();
        (-0.75 * c * r13, -c * r13)
    }
}

/// E_xc = ∫ε(ρ)ρ and μ_xc on the grid. Negative densities count as zero.
pub fn xc_energy_potential_with<X: ExchangeCorrelation>(
    xc: &X,
    rho: &ScalarField,
) -> (f64, ScalarField) {
    let mut mu = vec![0.0; rho.values.len()];
    let block = par::REDUCE_BLOCK;
    par::for_each_chunk_pair_mut(&mut mu, &rho.values, block, |m, r| {
        for (mv, &rv) in m.iter_mut().zip(r) {
            *mv = xc.eval(rv).1;
        }
    });
    let sum = par::sum_blocks(rho.values.len(), |range| {
        rho.values[range]
            .iter()
            .map(|&r| {
                let r = r.max(0.0);
                xc.eval(r).0 * r
            })
            .sum()
    });
    (
        sum * rho.grid.cell_volume(),
        ScalarField {
            grid: rho.grid,
            values: mu,
        },
    )
}

pub fn xc_energy_potential(rho: &ScalarField) -> (f64, ScalarField) {
    xc_energy_potential_with(&SlaterExchange, rho)
}
