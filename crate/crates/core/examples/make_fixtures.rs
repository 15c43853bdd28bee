//! Regenerates `fixtures/corpora/`.

use std::path::Path;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpora");
    std::fs::create_dir_all(&dir)?;
    for (name, text) in bicorpus::synth::fixture_corpora()? {
        std::fs::write(dir.join(&name), text)?;
        println!("wrote {name}");
    }
    Ok(())
}
