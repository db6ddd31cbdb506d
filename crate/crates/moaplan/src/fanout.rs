use moaplan_core::moa::{consult, AgentConfig, AgentFailure, AgentVerdict, ClarificationQuestion, FanOut};
use moaplan_core::provider::ChatProvider;

use crate::providers::SharedChat;

/// Consults every agent of a fan-out round on its own thread.
///
/// Calls go through the handle held here, not the `chat` argument, since
/// that one need not be shareable across threads. Build it from the same
/// provider the planner uses.
pub struct ThreadedFanOut {
    chat: SharedChat,
}

impl ThreadedFanOut {
    pub fn new(chat: SharedChat) -> Self {
        ThreadedFanOut { chat }
    }
}

impl FanOut for ThreadedFanOut {
    fn consult_all(
        &self,
        agents: &[AgentConfig],
        questions: &[ClarificationQuestion],
        prerequisites: &str,
        temperature: f64,
        _chat: &dyn ChatProvider,
    ) -> Vec<(AgentVerdict, Option<AgentFailure>)> {
        let chat: &(dyn ChatProvider + Send + Sync) = &*self.chat;
        std::thread::scope(|s| {
            let handles: Vec<_> = agents
                .iter()
                .map(|a| s.spawn(move || consult(a, questions, prerequisites, temperature, chat)))
                .collect();
            // joined in agent order, whatever order they finish in
            handles
                .into_iter()
                .map(|h| h.join().expect("agent thread panicked"))
                .collect()
        })
    }
}
