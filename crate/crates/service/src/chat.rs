//! Chat boundary. Only a canned-response stub is provided; it never touches
//! the network.

use std::collections::BTreeMap;
use std::sync::Mutex;

pub trait ChatClient: Send + Sync {
    fn reply(&self, category: &str, message: &str) -> String;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatCall {
    pub category: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ChatClientStub {
    responses: BTreeMap<String, String>,
    fallback: String,
    log: Mutex<Vec<ChatCall>>,
}

impl ChatClientStub {
    pub fn new(responses: BTreeMap<String, String>, fallback: &str) -> ChatClientStub {
        ChatClientStub { responses, fallback: fallback.to_string(), log: Mutex::new(Vec::new()) }
    }

    pub fn calls(&self) -> Vec<ChatCall> {
        self.log.lock().unwrap().clone()
    }
}

impl Default for ChatClientStub {
    fn default() -> Self {
        let responses = [
            ("general", "Chat is not connected in this build. The suggested follow-up questions below come from the question database."),
            ("plan", "Each plan row is the cheapest combination found for that rating. Open a plan to read its itemised report."),
            ("grants", "Grant amounts come from the catalog and are subtracted from prices to give the net cost."),
            ("rating", "Ratings run from A1, the best, to G. The model predicts the rating from the home's features."),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        ChatClientStub::new(responses, "This question is outside what the offline assistant can answer.")
    }
}

impl ChatClient for ChatClientStub {
    fn reply(&self, category: &str, message: &str) -> String {
        self.log.lock().unwrap().push(ChatCall { category: category.to_string(), message: message.to_string() });
        self.responses.get(category).unwrap_or(&self.fallback).clone()
    }
}
