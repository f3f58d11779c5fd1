//! Few-shot prompt templates with a `{question}` placeholder.

use std::path::Path;

pub const PLACEHOLDER: &str = "{question}";

const SINGLE_HOP: &str = "\
Answer the question with one to three passages. Put a short hint keyword before each passage and wrap every passage in << and >>.
Each passage is a full sentence that makes sense on its own. Never repeat a passage.

question: where is the headquarters of the company that makes the walkman?
passage: keyword: Walkman manufacturer << The Walkman is a line of portable audio players made by Sony. >> keyword: Sony headquarters << Sony is headquartered in Minato, Tokyo. >>
answer: Minato, Tokyo

question: how long is the great barrier reef?
passage: keyword: Great Barrier Reef length << The Great Barrier Reef stretches for over 2,300 kilometres. >>
answer: over 2,300 kilometres

question: who wrote the opera carmen?
passage: keyword: Carmen composer << Carmen is an opera by the French composer Georges Bizet. >>
answer: Georges Bizet

question: {question}
passage:";

const MULTI_HOP: &str = "\
Answer the question with one to three passages. Put a short hint keyword before each passage and wrap every passage in << and >>.
Each passage is a full sentence that makes sense on its own. Never repeat a passage. Prefer a new keyword for every passage.

question: in which country was the director of the film amelie born?
passage: keyword: Amelie director << Amelie was directed by Jean-Pierre Jeunet. >> keyword: Jean-Pierre Jeunet birthplace << Jean-Pierre Jeunet was born in Roanne, France. >>
answer: France

question: are the river thames and the river severn in the same country?
passage: keyword: River Thames country << The River Thames flows through southern England. >> keyword: River Severn country << The River Severn flows through Wales and England. >>
answer: yes

question: what instrument did the founder of the band queen's lead singer play?
passage: keyword: Queen lead singer << Freddie Mercury was the lead singer of Queen. >> keyword: Freddie Mercury instrument << Freddie Mercury also played the piano. >>
answer: piano

question: {question}
passage:";

/// Question followed by an open passage marker: decoding starts inside a span.
const PLAIN: &str = "question: {question}\npassage: <<";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    text: String,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Result<Self, String> {
        let text = text.into();
        if !text.contains(PLACEHOLDER) {
            return Err(format!("prompt template has no {PLACEHOLDER} placeholder"));
        }
        Ok(Self {
            name: name.into(),
            text,
        })
    }

    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "single_hop" => SINGLE_HOP,
            "multi_hop" => MULTI_HOP,
            "plain" => PLAIN,
            _ => return None,
        };
        Some(Self {
            name: name.to_string(),
            text: text.to_string(),
        })
    }

    /// A builtin name, or a path to a template file.
    pub fn resolve(spec: &str) -> Result<Self, String> {
        if let Some(t) = Self::builtin(spec) {
            return Ok(t);
        }
        let text = std::fs::read_to_string(Path::new(spec)).map_err(|e| format!("prompt template {spec}: {e}"))?;
        Self::new(spec, text)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn render(&self, question: &str) -> String {
        self.text.replace(PLACEHOLDER, question.trim())
    }
}
