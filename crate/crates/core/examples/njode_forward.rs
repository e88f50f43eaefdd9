//! Run an untrained neural jump ODE along one observed path and print the
//! left and right limits of its output at every observation.

use itogen::njode::{forward, predict_window, Mode, NjodeArch, NjodeParams, OutputLayout};
use itogen::path_sim::{observe, simulate, SdeSpec};

fn main() -> itogen::Result<()> {
    let ds = simulate(&SdeSpec::gbm(2.0, 0.3, 1.0), 1.0, 0.01, 1, 3)?;
    let obs = observe(&ds, 0.1, 3)?.remove(0);
    let params = NjodeParams::init(NjodeArch::new(1, OutputLayout::Joint), 0, 0)?;
    println!("{} weights, observations at {:?}", params.n_weights(), obs.indices);

    let traj = forward(&params, &obs, Mode::Eval, 0.0, 0)?;
    for j in &traj.jumps {
        println!(
            "t = {:.2}: X = {:.4}  G(t-) = {:?}  G(t) = {:?}",
            traj.grid.time(j.index),
            obs.value(obs.indices.iter().position(|&i| i == j.index).unwrap())[0],
            j.pre_output.to_vec(),
            j.post_output.to_vec()
        );
    }

    let s = obs.indices[1];
    let window = predict_window(&params, &obs, s, 10)?;
    println!("prediction from t = {:.2} over 10 steps: first {:?}, last {:?}", traj.grid.time(s), window.row(0).to_vec(), window.row(10).to_vec());
    Ok(())
}
