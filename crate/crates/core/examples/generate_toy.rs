//! Regenerates the bundled toy recordings:
//! `cargo run -p navigan-core --example generate_toy -- data/toy_crossing`

use std::path::PathBuf;

use anyhow::{Context, Result};
use navigan_core::toy::{bundled_configs, format_trajectory, simulate_crossing};

fn main() -> Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/toy_crossing".into()));
    for (split, cfg) in bundled_configs() {
        let dir = root.join(split);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let scene = simulate_crossing("crossing", &cfg)?;
        let path = dir.join("crossing.txt");
        std::fs::write(&path, format_trajectory(&scene)).with_context(|| format!("writing {}", path.display()))?;
        println!("{}: {} agents", path.display(), scene.num_agents());
    }
    Ok(())
}
