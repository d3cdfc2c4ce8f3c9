use nalgebra::{DMatrix, DVector};

use super::{LearnerState, Params};
use crate::mdp::TabularMdp;
use crate::successor::average;

/// Loss value split into its two residual terms.
///
/// `total = reward_residual + alpha * sf_residual`, each term already averaged
/// over actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub reward_residual: f64,
    pub sf_residual: f64,
}

/// Per-action residuals at the current parameters.
pub(crate) struct Residuals {
    /// P^aΦ per action.
    pub p_phi: Vec<DMatrix<f64>>,
    /// Φr_φ^a − r^a per action.
    pub reward: Vec<DVector<f64>>,
    /// Φ + γP^aΦF^π̄ − ΦF^a per action.
    pub sf: Vec<DMatrix<f64>>,
    pub f_bar: DMatrix<f64>,
}

impl Residuals {
    pub fn compute(params: &Params, mdp: &TabularMdp, p_phi: Option<&[DMatrix<f64>]>) -> Self {
        let gamma = mdp.discount();
        let phi = &params.phi;
        let f_bar = average(&params.sf);
        let p_phi: Vec<DMatrix<f64>> = match p_phi {
            Some(cached) => cached.to_vec(),
            None => mdp.transitions().iter().map(|p| p * phi).collect(),
        };
        let reward = params
            .rewards
            .iter()
            .zip(mdp.rewards())
            .map(|(rp, r)| phi * rp - r)
            .collect();
        let sf = params
            .sf
            .iter()
            .zip(&p_phi)
            .map(|(f, pp)| {
                let mut res = phi - phi * f;
                res.gemm(gamma, pp, &f_bar, 1.0);
                res
            })
            .collect();
        Self {
            p_phi,
            reward,
            sf,
            f_bar,
        }
    }

    pub fn breakdown(&self, alpha: f64) -> LossBreakdown {
        let na = self.reward.len() as f64;
        let reward_residual = self.reward.iter().map(|e| e.norm_squared()).sum::<f64>() / na;
        let sf_residual = self.sf.iter().map(|e| e.norm_squared()).sum::<f64>() / na;
        LossBreakdown {
            total: reward_residual + alpha * sf_residual,
            reward_residual,
            sf_residual,
        }
    }

    /// Analytic gradient of the loss. F^π̄ depends on every F^a, so each
    /// action's SF residual contributes to every F^b.
    pub fn gradients(
        &self,
        params: &Params,
        mdp: &TabularMdp,
        alpha: f64,
        with_phi: bool,
    ) -> Params {
        let gamma = mdp.discount();
        let na = self.reward.len();
        let scale = 1.0 / na as f64;
        let n = params.num_features();
        let phi = &params.phi;
        let id = DMatrix::<f64>::identity(n, n);

        let g_sf: Vec<DMatrix<f64>> = self.sf.iter().map(|r| r * (2.0 * alpha * scale)).collect();

        let mut grad = Params::zeros(phi.nrows(), na, n);
        for a in 0..na {
            grad.rewards[a] = phi.tr_mul(&self.reward[a]) * (2.0 * scale);
        }

        let mut shared = DMatrix::<f64>::zeros(n, n);
        for a in 0..na {
            shared.gemm_tr(gamma * scale, &self.p_phi[a], &g_sf[a], 1.0);
        }
        for a in 0..na {
            let mut g = -phi.tr_mul(&g_sf[a]);
            g += &shared;
            grad.sf[a] = g;
        }

        if with_phi {
            let mut g_phi = DMatrix::<f64>::zeros(phi.nrows(), n);
            for a in 0..na {
                g_phi.ger(2.0 * scale, &self.reward[a], &params.rewards[a], 1.0);
                g_phi.gemm(1.0, &g_sf[a], &(&id - &params.sf[a]).transpose(), 1.0);
                let right = &g_sf[a] * self.f_bar.transpose();
                g_phi.gemm_tr(gamma, mdp.transition(a), &right, 1.0);
            }
            grad.phi = g_phi;
        }
        grad
    }
}

/// 𝓛 = (1/|A|) Σ_a ‖Φr_φ^a − r^a‖² + α‖Φ + γP^aΦF^π̄ − ΦF^a‖²_F
pub fn loss(state: &LearnerState, mdp: &TabularMdp, alpha: f64) -> LossBreakdown {
    Residuals::compute(&state.params, mdp, None).breakdown(alpha)
}

/// Gradients of the loss with respect to Φ, every r_φ^a and every F^a.
pub fn loss_gradients(state: &LearnerState, mdp: &TabularMdp, alpha: f64) -> Params {
    Residuals::compute(&state.params, mdp, None).gradients(&state.params, mdp, alpha, true)
}
