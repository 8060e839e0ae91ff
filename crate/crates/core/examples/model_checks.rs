//! Builds the case-study state-space model and runs the physical-consistency checks.
use opo_estim::filters::steady_state_riccati;
use opo_estim::model::{
    check_fluctuation_dissipation, check_fluctuation_observation, check_uncertainty,
    BNormalization, CompleteModel, PhysicalParams, SingleChannelModel,
};

fn main() -> opo_estim::Result<()> {
    let params = PhysicalParams::default();
    for norm in [BNormalization::Consistent, BNormalization::Paper] {
        let single = SingleChannelModel::single(&params, 0.5, norm)?;
        let complete = CompleteModel::complete(&params, 0.5, params.theta_m, params.theta_m, norm)?;
        println!("== B normalization: {norm:?}");
        println!(
            "A = {}C = {}D = {}Gamma = {}R = {}",
            single.a, single.c, single.d, single.gamma_corr, single.r
        );

        let fd = check_fluctuation_dissipation(&single.a, &single.d, params.hbar);
        let fo =
            check_fluctuation_observation(&single.d, &single.gamma_corr, &single.c, params.hbar);
        println!(
            "fluctuation-dissipation: pass={} margin={:.4}",
            fd.pass, fd.margin
        );
        println!(
            "fluctuation-observation: pass={} margin={:.4}",
            fo.pass, fo.margin
        );

        for (label, v) in [
            ("single", steady_state_riccati(&single)?),
            ("complete", steady_state_riccati(&complete)?),
        ] {
            let h = check_uncertainty(&v, params.hbar)?;
            println!(
                "steady state ({label}): V = {v}  det V - hbar^2/4 = {:.3e} pass={}",
                h.margin, h.pass
            );
        }
    }
    Ok(())
}
