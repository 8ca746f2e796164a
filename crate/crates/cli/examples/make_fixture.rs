//! Regenerates the bundled synthetic extract and its analysis config.

use std::path::Path;

use cde_cli::fixture::{synthetic_extract, ANALYZE_TOML, FIXTURE_ROWS, FIXTURE_SEED};

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("ukb_synthetic.csv"), synthetic_extract(FIXTURE_ROWS, FIXTURE_SEED))?;
    std::fs::write(dir.join("analyze.toml"), ANALYZE_TOML)?;
    Ok(())
}
