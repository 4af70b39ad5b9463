//! Bundled payload configurations (a)–(d).

use std::path::Path;

use super::{ScenarioConfig, SimError};

const PRESETS: [(&str, &str); 4] = [
    ("a", include_str!("../../presets/config_a.toml")),
    ("b", include_str!("../../presets/config_b.toml")),
    ("c", include_str!("../../presets/config_c.toml")),
    ("d", include_str!("../../presets/config_d.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, SimError> {
    toml::from_str(text).map_err(|e| SimError::InvalidConfig(e.to_string()))
}

/// A bundled preset by name.
pub fn scenario(name: &str) -> Result<ScenarioConfig, SimError> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| SimError::InvalidConfig(format!("unknown preset {name:?} (expected one of a, b, c, d)")))?;
    parse_scenario(text)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, SimError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimError::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text)
}

/// A preset name or a path to a scenario file.
pub fn resolve(name_or_path: &str) -> Result<ScenarioConfig, SimError> {
    if names().any(|n| n == name_or_path) {
        scenario(name_or_path)
    } else {
        load_scenario(Path::new(name_or_path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::TrajectoryKind;
    use nalgebra::Vector3;

    #[test]
    fn all_presets_parse_and_validate() {
        for n in names() {
            let s = scenario(n).unwrap();
            let m = s.validate().unwrap();
            assert_eq!(s.name, n);
            assert_eq!(m.robot_count(), 3);
            assert_eq!(s.trajectory.kind, TrajectoryKind::RandomVia);
            assert_eq!(s.trajectory.via_count, 80);
            assert_eq!(s.sample_rate, 100.0);
        }
    }

    #[test]
    fn preset_values_are_verbatim() {
        let d = scenario("d").unwrap();
        assert_eq!(d.payload.mass, 10.478);
        assert_eq!(d.payload.com.position, [0.089, 0.593, 0.055]);
        assert_eq!(d.payload.com.rotation_deg, [-1.662, -0.702, 68.937]);
        assert_eq!(d.payload.principal_inertia, [1.711, 2.122, 3.772]);
        assert_eq!(d.payload.grasp_chain[0].position, [-0.382, 0.800, -0.038]);
        assert_eq!(d.payload.grasp_chain[1].rotation_deg, [0.0, 0.0, 45.0]);
        let m = d.to_model_checked();
        let t12 = m.relative(1, 2);
        assert!((t12.translation - Vector3::new(-0.382, 0.800, -0.038)).norm() < 1e-15);
        assert!((t12.rotation.angle().to_degrees() - 135.0).abs() < 1e-9);
    }

    #[test]
    fn printed_loops_close_to_about_a_millimeter() {
        for n in names() {
            let (deg, m) = scenario(n).unwrap().payload.closing_error().unwrap();
            assert!(deg < 1e-9, "{n}: {deg}");
            assert!(m < 3e-3, "{n}: {m}");
        }
    }

    #[test]
    fn unknown_preset_is_rejected() {
        assert!(matches!(scenario("e"), Err(SimError::InvalidConfig(_))));
        assert!(resolve("/nonexistent/scenario.toml").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let s = scenario("b").unwrap();
        let text = toml::to_string(&s).unwrap();
        assert_eq!(parse_scenario(&text).unwrap(), s);
    }

    impl ScenarioConfig {
        fn to_model_checked(&self) -> crate::sim::PayloadModel {
            self.validate().unwrap()
        }
    }
}
