pub mod fit_loss;
pub mod fit_s21;
pub mod ftir;
pub mod simulate;
pub mod thermometry;

use serde::{Deserialize, Serialize};
use tlsq::inference::LossModelFit;
use tlsq::tlsmodel::RelaxKernelParams;

/// Everything needed to reconstruct the fitted loss model downstream
/// (thermometry reads this back from the fit-loss report).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSection {
    pub film: LossModelFit,
    pub kernel: RelaxKernelParams,
    pub tc_kelvin: f64,
    pub alpha_kin: f64,
}
