use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{estimate_tokens, prompt_digest, ChatBackend, ChatRequest, ChatResponse, LlmError};
use crate::model::AgentRole;

/// Replays fixture replies keyed by [`prompt_digest`]. A fixture directory
/// holds one `<digest>.txt` file per expected prompt; any prompt change
/// surfaces as a [`LlmError::FixtureMiss`].
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    replies: HashMap<String, String>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, LlmError> {
        let mut replies = HashMap::new();
        for entry in fs::read_dir(dir.as_ref())? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            replies.insert(stem.to_string(), fs::read_to_string(&path)?);
        }
        Ok(Self { replies })
    }

    pub fn insert(&mut self, role: AgentRole, system: &str, user: &str, reply: impl Into<String>) {
        self.replies
            .insert(prompt_digest(role, system, user), reply.into());
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, role: AgentRole, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let digest = prompt_digest(role, &request.system_prompt, &request.user_prompt);
        let text = self
            .replies
            .get(&digest)
            .ok_or(LlmError::FixtureMiss { role, digest })?
            .clone();
        Ok(ChatResponse {
            tokens_in: estimate_tokens(&request.system_prompt) + estimate_tokens(&request.user_prompt),
            tokens_out: estimate_tokens(&text),
            text,
            retries: 0,
        })
    }
}

type Responder = dyn Fn(AgentRole, &ChatRequest) -> Result<String, LlmError> + Send + Sync;

/// Backend driven by an in-process responder function. With
/// [`FnBackend::recording_to`] every reply is also written as a fixture
/// file that [`ScriptedBackend::from_dir`] can replay.
pub struct FnBackend {
    responder: Box<Responder>,
    record_dir: Option<PathBuf>,
}

impl FnBackend {
    pub fn new<F>(responder: F) -> Self
    where
        F: Fn(AgentRole, &ChatRequest) -> Result<String, LlmError> + Send + Sync + 'static,
    {
        Self {
            responder: Box::new(responder),
            record_dir: None,
        }
    }

    pub fn recording_to(mut self, dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        self.record_dir = Some(dir);
        Ok(self)
    }
}

impl ChatBackend for FnBackend {
    fn complete(&self, role: AgentRole, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let text = (self.responder)(role, request)?;
        if let Some(dir) = &self.record_dir {
            let digest = prompt_digest(role, &request.system_prompt, &request.user_prompt);
            fs::write(dir.join(format!("{digest}.txt")), &text)?;
        }
        Ok(ChatResponse {
            tokens_in: estimate_tokens(&request.system_prompt) + estimate_tokens(&request.user_prompt),
            tokens_out: estimate_tokens(&text),
            text,
            retries: 0,
        })
    }
}
