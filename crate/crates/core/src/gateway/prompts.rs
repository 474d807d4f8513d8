//! Prompt templates with `{placeholder}` substitution.
//!
//! The shipped templates live in the crate's `prompts/` directory and are
//! compiled in; a directory with files of the same names overrides them.

use std::path::Path;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::memory::ContrastivePair;

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub judge: String,
    pub strategy_deep_search: String,
    pub strategy_coding: String,
    pub refine_deep_search: String,
    pub refine_coding: String,
    pub execute: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            judge: include_str!("../../prompts/judge.txt").into(),
            strategy_deep_search: include_str!("../../prompts/strategy_deep_search.txt").into(),
            strategy_coding: include_str!("../../prompts/strategy_coding.txt").into(),
            refine_deep_search: include_str!("../../prompts/refine_deep_search.txt").into(),
            refine_coding: include_str!("../../prompts/refine_coding.txt").into(),
            execute: include_str!("../../prompts/execute.txt").into(),
        }
    }
}

impl PromptSet {
    /// Defaults, overridden by any `<name>.txt` present in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut set = PromptSet::default();
        let slots: [(&str, &mut String); 6] = [
            ("judge", &mut set.judge),
            ("strategy_deep_search", &mut set.strategy_deep_search),
            ("strategy_coding", &mut set.strategy_coding),
            ("refine_deep_search", &mut set.refine_deep_search),
            ("refine_coding", &mut set.refine_coding),
            ("execute", &mut set.execute),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(set)
    }

    /// Deep-search tasks get the fact-aware templates; everything else uses
    /// the self-contained coding ones.
    pub fn strategy(&self, domain: Domain) -> &str {
        match domain {
            Domain::DeepSearch => &self.strategy_deep_search,
            _ => &self.strategy_coding,
        }
    }

    pub fn refine(&self, domain: Domain) -> &str {
        match domain {
            Domain::DeepSearch => &self.refine_deep_search,
            _ => &self.refine_coding,
        }
    }
}

/// Replaces each `{key}` in one left-to-right pass. Substituted values are
/// not rescanned, and unknown placeholders are left as written.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let key = &after[..close];
            vars.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, v)) => {
                out.push_str(v);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Formats retrieved pairs for the refinement template.
pub fn format_examples(pairs: &[ContrastivePair]) -> String {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let task = p.source_prompt.as_deref().unwrap_or(&p.source_task_id);
            format!(
                "Example {}:\nTask:\n{}\n\nLosing plan:\n{}\n\nWinning plan:\n{}\n",
                i + 1,
                task.trim(),
                p.losing_strategy.trim(),
                p.winning_strategy.trim()
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}
