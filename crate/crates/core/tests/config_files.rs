use std::path::{Path, PathBuf};

use rsu_autolabel::io::{RunConfig, Source};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

#[test]
fn defaults_file_spells_out_the_defaults() {
    let cfg = RunConfig::load(fixture("defaults.cfg")).unwrap();
    assert_eq!(cfg, RunConfig::default());
}

#[test]
fn scenario_fixtures_load() {
    for name in ["static_car", "crossing_pair", "partial_visibility"] {
        let cfg = RunConfig::load(fixture(&format!("{name}.cfg"))).unwrap();
        assert_eq!(cfg.seed, Some(0));
        match cfg.source().unwrap() {
            Some(Source::Simulate { sequence, config }) => {
                assert_eq!(sequence, name);
                assert_eq!(config.seed, 0);
            }
            other => panic!("{name}: {other:?}"),
        }
    }
}
