use std::collections::BTreeMap;
use std::path::Path;

use super::GatewayError;

const DEFAULTS: &[(&str, &str)] = &[
    ("answer", include_str!("../../prompts/answer.txt")),
    ("evaluate", include_str!("../../prompts/evaluate.txt")),
    ("extract_states", include_str!("../../prompts/extract_states.txt")),
    ("repair", include_str!("../../prompts/repair.txt")),
    ("sentiment", include_str!("../../prompts/sentiment.txt")),
    ("sentiment_retry", include_str!("../../prompts/sentiment_retry.txt")),
    ("summarize", include_str!("../../prompts/summarize.txt")),
];

/// Named prompt templates with `{{placeholder}}` slots. Lines starting with
/// `##` are template metadata and are not sent to the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<String, String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            templates: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl PromptSet {
    pub fn defaults() -> &'static [(&'static str, &'static str)] {
        DEFAULTS
    }

    /// Built-in templates overridden by any `<name>.txt` found in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, GatewayError> {
        let mut set = PromptSet::default();
        if !dir.is_dir() {
            return Ok(set);
        }
        let entries = std::fs::read_dir(dir).map_err(|e| GatewayError::Template(e.to_string()))?;
        for entry in entries {
            let path = entry.map_err(|e| GatewayError::Template(e.to_string()))?.path();
            if path.extension().is_some_and(|x| x == "txt") {
                let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let body = std::fs::read_to_string(&path)
                    .map_err(|e| GatewayError::Template(format!("{}: {e}", path.display())))?;
                set.templates.insert(name, body);
            }
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.templates.get(name).map(String::as_str)
    }

    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, GatewayError> {
        let template = self
            .get(name)
            .ok_or_else(|| GatewayError::Template(format!("unknown template `{name}`")))?;
        let body: String = template
            .lines()
            .filter(|l| !l.starts_with("##"))
            .collect::<Vec<_>>()
            .join("\n");
        let mut out = String::with_capacity(body.len());
        let mut rest = body.as_str();
        while let Some(open) = rest.find("{{") {
            out.push_str(&rest[..open]);
            let after = &rest[open + 2..];
            let close = after
                .find("}}")
                .ok_or_else(|| GatewayError::Template(format!("unclosed placeholder in `{name}`")))?;
            let key = after[..close].trim();
            let value = vars
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| GatewayError::Template(format!("`{name}` needs a value for `{key}`")))?;
            out.push_str(value);
            rest = &after[close + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_fills_placeholders_and_drops_metadata() {
        let set = PromptSet::default();
        let p = set.render("sentiment", &[("text", "It rained.")]).unwrap();
        assert!(p.contains("It rained."));
        assert!(!p.contains("##"));
        assert!(!p.contains("{{"));
    }

    #[test]
    fn missing_value_is_an_error() {
        let set = PromptSet::default();
        assert!(matches!(set.render("sentiment", &[]), Err(GatewayError::Template(_))));
        assert!(set.render("nope", &[]).is_err());
    }

    #[test]
    fn directory_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("sentiment.txt"), "S: {{text}}").unwrap();
        let set = PromptSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.render("sentiment", &[("text", "x")]).unwrap(), "S: x");
        assert!(set.get("summarize").is_some());
    }
}
