//! Ready-made scenarios for each pipeline.

use crate::config::Pipeline;

pub fn demo_config(pipeline: Pipeline) -> &'static str {
    match pipeline {
        Pipeline::Twomode => include_str!("../demos/twomode.toml"),
        Pipeline::Multimode => include_str!("../demos/multimode.toml"),
        Pipeline::Calibration => include_str!("../demos/calibration.toml"),
        Pipeline::Scattering => include_str!("../demos/scattering.toml"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::LoadedConfig;
    use std::path::Path;

    #[test]
    fn every_demo_validates() {
        for p in [Pipeline::Twomode, Pipeline::Multimode, Pipeline::Calibration, Pipeline::Scattering] {
            let c = LoadedConfig::parse(Path::new("demo.toml"), demo_config(p).to_string()).unwrap();
            assert_eq!(c.config.pipeline, p);
        }
    }
}
