use std::path::Path;

use robust_da::ExperimentConfig;

use crate::error::CliError;

/// 1-based line of byte offset `pos`.
fn line_of(text: &str, pos: usize) -> usize {
    text[..pos.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates an experiment config written in TOML.
pub fn parse_config(text: &str, origin: &Path) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let at = e.span().map(|s| format!(":{}", line_of(text, s.start))).unwrap_or_default();
        CliError::Config(format!("{}{at}: {}", origin.display(), e.message().trim_end()))
    })?;
    cfg.validate().map_err(|e| CliError::Config(format!("{}: {e}", origin.display())))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: cannot read config: {e}", path.display())))?;
    parse_config(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use robust_da::Method;

    const MINIMAL: &str = "method = \"3dvar\"\nobs_frequency = 0.1\nwindow = 2.0\ntau = 3.0\nseed = 7\n";

    #[test]
    fn minimal_config() {
        let cfg = parse_config(MINIMAL, Path::new("c.toml")).unwrap();
        assert_eq!(cfg.method, Method::Var3d);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.n_ens, 20);
    }

    #[test]
    fn missing_key_is_named() {
        let text = MINIMAL.replace("seed = 7\n", "");
        let err = parse_config(&text, Path::new("c.toml")).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn error_points_at_line() {
        let text = MINIMAL.replace("tau = 3.0", "tau = \"three\"");
        let err = parse_config(&text, Path::new("c.toml")).unwrap_err().to_string();
        assert!(err.starts_with("c.toml:4:"), "{err}");
        let text = format!("{MINIMAL}[solver]\nrhoo = 2.0\n");
        let err = parse_config(&text, Path::new("c.toml")).unwrap_err().to_string();
        assert!(err.starts_with("c.toml:7:") && err.contains("rhoo"), "{err}");
    }

    #[test]
    fn outlier_period_forms() {
        let every = format!("{MINIMAL}[outliers]\nperiod = \"every\"\n");
        assert_eq!(parse_config(&every, Path::new("c.toml")).unwrap().outliers.period, None);
        let periodic = format!("{MINIMAL}[outliers]\nperiod = 0.4\n");
        assert_eq!(parse_config(&periodic, Path::new("c.toml")).unwrap().outliers.period, Some(0.4));
        let bad = format!("{MINIMAL}[outliers]\nperiod = \"often\"\n");
        assert!(parse_config(&bad, Path::new("c.toml")).is_err());
    }

    #[test]
    fn bundled_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut count = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                load_config(&path).unwrap();
                count += 1;
            }
        }
        assert!(count >= 4);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let text = MINIMAL.replace("tau = 3.0", "tau = -1.0");
        assert_eq!(parse_config(&text, Path::new("c.toml")).unwrap_err().exit_code(), 1);
    }
}
