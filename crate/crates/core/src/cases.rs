//! Bundled case documents.

pub const EXAMPLE1: &str = include_str!("../cases/example1.json");
pub const IEEE118: &str = include_str!("../cases/ieee118.json");
pub const IEEE118_TX: &str = include_str!("../cases/ieee118_tx.json");

/// Bundled cases by file name.
pub fn bundled() -> [(&'static str, &'static str); 3] {
    [
        ("example1.json", EXAMPLE1),
        ("ieee118.json", IEEE118),
        ("ieee118_tx.json", IEEE118_TX),
    ]
}
