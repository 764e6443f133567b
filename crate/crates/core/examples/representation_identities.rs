//! The per-person quasi-information from its compact representation against
//! the brute-force `Dᵀ V⁻¹ D`, for items of unequal easiness.

use rpgcm::linalg::max_relative_deviation;
use rpgcm::moments::{individual_quasi_info_bruteforce, v_inverse_closed_form};
use rpgcm::{assemble_moments, individual_quasi_info, ItemLayout, ModelSpec};

fn main() -> rpgcm::Result<()> {
    let times = vec![0.0, 1.0, 2.0];
    let layout = ItemLayout::new(times, vec![vec![0.6, 1.0, 1.7], vec![0.9, 1.3], vec![2.0]])?;
    let model = ModelSpec::exponential_saturation(1.0, 0.8, 0.7)?;
    for (tau, rho) in [(0.0, 0.0), (0.5, 0.0), (0.5, 0.5), (1.5, 1.0)] {
        let ms = assemble_moments(&model, &layout, tau, rho)?;
        let brute = individual_quasi_info_bruteforce(&ms)?;
        let compact = individual_quasi_info(&model, &layout, tau, rho)?;
        let dense = ms.v.clone().try_inverse().expect("V is positive definite");
        println!(
            "tau = {tau}, rho = {rho}: information deviation {:.1e}, V inverse deviation {:.1e}",
            max_relative_deviation(&compact, &brute),
            max_relative_deviation(&v_inverse_closed_form(&ms, tau, rho), &dense)
        );
    }
    println!("\ninformation at tau = 0.5, rho = 0.5:\n{}", individual_quasi_info(&model, &layout, 0.5, 0.5)?);
    Ok(())
}
