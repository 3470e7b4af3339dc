//! Compact command-line spellings for embedders, translators and tokenizers.

use anyhow::{bail, Context};
use mlcurate::embedding::EmbedderSpec;
use mlcurate::translate::TranslatorSpec;
use mlcurate::TokenizerSpec;

/// `hashing:DIM`, `http:ID=URL` or `subprocess:ID=COMMAND ARGS...`.
pub fn embedder(s: &str) -> anyhow::Result<EmbedderSpec> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    match kind {
        "hashing" => {
            let dim = if rest.is_empty() { 256 } else { rest.parse().context("hashing dimension")? };
            Ok(EmbedderSpec::Hashing { dim })
        }
        "http" => {
            let (id, url) = rest.split_once('=').context("expected http:ID=URL")?;
            Ok(EmbedderSpec::Http {
                id: id.into(),
                url: url.into(),
            })
        }
        "subprocess" => {
            let (id, cmd) = rest.split_once('=').context("expected subprocess:ID=COMMAND")?;
            Ok(EmbedderSpec::Subprocess {
                id: id.into(),
                command: words(cmd)?,
            })
        }
        _ => bail!("unknown embedder `{s}`"),
    }
}

/// `mock`, `mock:MARKER`, `http:URL` or `subprocess:COMMAND ARGS...`.
pub fn translator(s: &str, fail_ids: Vec<String>) -> anyhow::Result<TranslatorSpec> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    match kind {
        "mock" => Ok(TranslatorSpec::Mock {
            marker: rest.into(),
            fail_ids,
        }),
        "http" if !rest.is_empty() => Ok(TranslatorSpec::Http { url: rest.into() }),
        "subprocess" => Ok(TranslatorSpec::Subprocess { command: words(rest)? }),
        _ => bail!("unknown translator `{s}`"),
    }
}

/// The tokenizer id as written in inventories and manifests.
pub fn tokenizer(s: &str) -> anyhow::Result<TokenizerSpec> {
    match s {
        "whitespace-punct" => Ok(TokenizerSpec::WhitespacePunct),
        "unicode-word" => Ok(TokenizerSpec::UnicodeWord),
        _ => match s.strip_prefix("external-count-field:") {
            Some(key) if !key.is_empty() => Ok(TokenizerSpec::ExternalCountField { key: key.into() }),
            _ => bail!("unknown tokenizer `{s}`"),
        },
    }
}

fn words(cmd: &str) -> anyhow::Result<Vec<String>> {
    let w: Vec<String> = cmd.split_whitespace().map(String::from).collect();
    if w.is_empty() {
        bail!("empty command");
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spellings() {
        assert_eq!(embedder("hashing:32").unwrap(), EmbedderSpec::Hashing { dim: 32 });
        assert!(matches!(embedder("http:e5=http://x").unwrap(), EmbedderSpec::Http { id, .. } if id == "e5"));
        assert!(embedder("nope").is_err());
        assert!(matches!(translator("mock:[x]", vec![]).unwrap(), TranslatorSpec::Mock { marker, .. } if marker == "[x]"));
        assert!(translator("http", vec![]).is_err());
        for id in ["whitespace-punct", "unicode-word", "external-count-field:n"] {
            assert_eq!(tokenizer(id).unwrap().id(), id);
        }
    }
}
