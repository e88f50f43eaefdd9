//! Write SVG charts of paths, a marginal histogram and a coefficient trace.

use itogen::eval::shared_histogram;
use itogen::path_sim::{simulate, SdeSpec};
use itogen::plot::{histogram_svg, lines_svg, paths_svg};

fn main() -> itogen::Result<()> {
    let dir = std::env::temp_dir().join("itogen-plots");
    std::fs::create_dir_all(&dir)?;
    let a = simulate(&SdeSpec::gbm(2.0, 0.3, 1.0), 1.0, 0.01, 500, 1)?;
    let b = simulate(&SdeSpec::ou(2.0, 3.0, 1.0, 1.0), 1.0, 0.01, 500, 2)?;
    std::fs::write(dir.join("paths.svg"), paths_svg("GBM and OU paths", &[("GBM", &a, "steelblue"), ("OU", &b, "darkorange")], 200))?;
    let hist = shared_histogram(&a.marginal(100, 0), &b.marginal(100, 0))?;
    std::fs::write(dir.join("marginal.svg"), histogram_svg("X at t = 1", &hist, ("GBM", "OU")))?;
    let drift: Vec<(f64, f64)> = (0..=100).map(|k| (k as f64 * 0.01, 2.0 * a.value(0, k)[0])).collect();
    std::fs::write(dir.join("drift.svg"), lines_svg("GBM drift along path 0", &[("2 X_t", drift, "black")]))?;
    println!("wrote {}", dir.display());
    Ok(())
}
