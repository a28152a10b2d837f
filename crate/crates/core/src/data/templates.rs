//! Registered prompt templates. Every prompt is built from exactly one of these.

use crate::error::{Error, Result};

/// Prefix standing in for the image tokens.
pub const IMAGE_PREFIX: &str = "<image>\n";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Template {
    pub id: &'static str,
    pub text: &'static str,
}

pub const GROUNDING: Template = Template {
    id: "grounding",
    text: "<image>\nPlease provide the bounding box coordinate of the region this sentence describes: <ref>{ref}</ref>",
};

pub const WIDGET_CAPTION: Template = Template {
    id: "widget-caption",
    text: "<image>\nDescribe the function within the selected area <box> {bbox} </box> of the image. answer with phrases rather than sentence.",
};

pub const SRP: Template = Template {
    id: "srp",
    text: "<image>\nWhat is the spatial relationship between <box> {a} </box> and <box> {b} </box>?",
};

pub const SPE_TEXT: Template = Template {
    id: "spe-text",
    text: "<image>\nWhat text is shown within <box> {bbox} </box>?",
};

pub const SPE_ICON: Template = Template {
    id: "spe-icon",
    text: "<image>\nWhich icon is shown within <box> {bbox} </box>?",
};

pub const SPE_LOCATION: Template = Template {
    id: "spe-location",
    text: "<image>\nWhere on the screen is the {kind} named <ref>{ref}</ref>?",
};

pub const SPE_RELATION: Template = Template {
    id: "spe-relation",
    text: "<image>\nWhich element belongs to the same component as <ref>{ref}</ref>?",
};

pub const GLOBAL_DESC: Template = Template {
    id: "global-desc",
    text: "<image>\nGenerate a summary of the screen in one sentence.",
};

pub const LOCAL_DESC: Template = Template {
    id: "local-desc",
    text: "<image>\nDescribe the marked element <box> {bbox} </box> and the component it belongs to.",
};

pub const REGISTRY: [Template; 9] = [
    GROUNDING,
    WIDGET_CAPTION,
    SRP,
    SPE_TEXT,
    SPE_ICON,
    SPE_LOCATION,
    SPE_RELATION,
    GLOBAL_DESC,
    LOCAL_DESC,
];

pub fn by_id(id: &str) -> Option<Template> {
    REGISTRY.iter().copied().find(|t| t.id == id)
}

enum Piece<'a> {
    Lit(&'a str),
    Slot(&'a str),
}

fn pieces(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let close = open + rest[open..].find('}').expect("template slots are closed");
        if open > 0 {
            out.push(Piece::Lit(&rest[..open]));
        }
        out.push(Piece::Slot(&rest[open + 1..close]));
        rest = &rest[close + 1..];
    }
    if !rest.is_empty() {
        out.push(Piece::Lit(rest));
    }
    out
}

impl Template {
    pub fn slots(&self) -> Vec<&'static str> {
        pieces(self.text)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s),
                Piece::Lit(_) => None,
            })
            .collect()
    }

    /// Literal segments of the template body, image prefix removed.
    pub fn segments(&self) -> Vec<&'static str> {
        let body = self.text.strip_prefix(IMAGE_PREFIX).unwrap_or(self.text);
        pieces(body)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Lit(s) => Some(s),
                Piece::Slot(_) => None,
            })
            .collect()
    }

    /// Fill every slot; extra or missing values are a contract error.
    pub fn fill(&self, values: &[(&str, &str)]) -> Result<String> {
        let mut out = String::new();
        let mut used = 0;
        for p in pieces(self.text) {
            match p {
                Piece::Lit(s) => out.push_str(s),
                Piece::Slot(name) => {
                    let v = values
                        .iter()
                        .find(|(k, _)| *k == name)
                        .ok_or_else(|| Error::Contract(format!("template {} needs {{{}}}", self.id, name)))?;
                    out.push_str(v.1);
                    used += 1;
                }
            }
        }
        if used != values.len() {
            return Err(Error::Contract(format!("unused values for template {}", self.id)));
        }
        Ok(out)
    }
}

/// Every literal segment of every registered template, deduplicated, in registry order.
pub fn all_segments() -> Vec<&'static str> {
    let mut out: Vec<&'static str> = Vec::new();
    for t in REGISTRY {
        for s in t.segments() {
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    out
}
