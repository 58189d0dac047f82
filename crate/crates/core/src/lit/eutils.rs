use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use chrono::NaiveDate;
use roxmltree::{Document, Node};
use serde::{Deserialize, Serialize};
use url::Url;

use super::{last_day_of_month, LitError, LiteratureSource, QueryStrategy};
use crate::llm::{HttpReply, RetryPolicy, TransportError};
use crate::model::LiteratureRecord;
use crate::ratelimit::RateLimiter;

pub const ENV_NCBI_KEY: &str = "HYPOFORGE_NCBI_KEY";
const DEFAULT_BASE: &str = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/";

pub trait GetTransport: Send + Sync {
    fn get(&self, url: &str) -> Result<HttpReply, TransportError>;
}

pub struct UreqGetTransport {
    agent: ureq::Agent,
}

impl Default for UreqGetTransport {
    fn default() -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build(),
        }
    }
}

impl GetTransport for UreqGetTransport {
    fn get(&self, url: &str) -> Result<HttpReply, TransportError> {
        match self.agent.get(url).call() {
            Ok(resp) => {
                let status = resp.status();
                let body = resp.into_string().map_err(|e| TransportError(e.to_string()))?;
                Ok(HttpReply { status, body })
            }
            Err(ureq::Error::Status(status, resp)) => Ok(HttpReply {
                status,
                body: resp.into_string().unwrap_or_default(),
            }),
            Err(e) => Err(TransportError(e.to_string())),
        }
    }
}

/// The request URL with any `api_key` parameter removed, used as the
/// record/replay key so fixtures never hold credentials.
pub fn replay_key(url: &str) -> String {
    match Url::parse(url) {
        Ok(mut u) => {
            let pairs: Vec<(String, String)> = u
                .query_pairs()
                .filter(|(k, _)| k != "api_key")
                .map(|(k, v)| (k.into_owned(), v.into_owned()))
                .collect();
            u.query_pairs_mut().clear().extend_pairs(pairs);
            u.to_string()
        }
        Err(_) => url.to_string(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Exchange {
    url: String,
    status: u16,
    body: String,
}

/// Serves recorded exchanges from a JSONL file of `{url, status, body}`.
#[derive(Debug, Clone, Default)]
pub struct ReplayTransport {
    replies: HashMap<String, HttpReply>,
}

impl ReplayTransport {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, LitError> {
        let mut replies = HashMap::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ex: Exchange = serde_json::from_str(&line)
                .map_err(|e| LitError::Protocol(format!("replay line {}: {e}", i + 1)))?;
            replies.insert(
                replay_key(&ex.url),
                HttpReply {
                    status: ex.status,
                    body: ex.body,
                },
            );
        }
        Ok(Self { replies })
    }

    pub fn insert(&mut self, url: &str, reply: HttpReply) {
        self.replies.insert(replay_key(url), reply);
    }
}

impl GetTransport for ReplayTransport {
    fn get(&self, url: &str) -> Result<HttpReply, TransportError> {
        self.replies
            .get(&replay_key(url))
            .cloned()
            .ok_or_else(|| TransportError(format!("no recorded reply for {}", replay_key(url))))
    }
}

/// Forwards to a live transport and appends every exchange to a JSONL file
/// readable by [`ReplayTransport::from_file`].
pub struct RecordingTransport {
    inner: Box<dyn GetTransport>,
    path: PathBuf,
    lock: Mutex<()>,
}

impl RecordingTransport {
    pub fn new(inner: Box<dyn GetTransport>, path: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            path: path.into(),
            lock: Mutex::new(()),
        }
    }
}

impl GetTransport for RecordingTransport {
    fn get(&self, url: &str) -> Result<HttpReply, TransportError> {
        let reply = self.inner.get(url)?;
        let ex = Exchange {
            url: replay_key(url),
            status: reply.status,
            body: reply.body.clone(),
        };
        let _guard = self.lock.lock().expect("recording lock poisoned");
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| TransportError(e.to_string()))?;
        writeln!(f, "{}", serde_json::to_string(&ex).expect("exchange serializes"))
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(reply)
    }
}

/// PubMed client over esearch (JSON) and efetch (XML) with a shared
/// request-rate cap of 3/s, or 10/s when an API key is configured.
pub struct EutilsClient {
    base: String,
    api_key: Option<String>,
    transport: Box<dyn GetTransport>,
    limiter: RateLimiter,
    retry: RetryPolicy,
}

impl EutilsClient {
    pub fn new(transport: Box<dyn GetTransport>, api_key: Option<String>) -> Self {
        let rate = if api_key.is_some() { 10 } else { 3 };
        Self {
            base: DEFAULT_BASE.into(),
            api_key,
            transport,
            limiter: RateLimiter::per_second(rate),
            retry: RetryPolicy::new(4, Duration::from_millis(500)),
        }
    }

    /// Live client; the API key is read from the environment when set.
    pub fn from_env() -> Self {
        Self::new(
            Box::new(UreqGetTransport::default()),
            std::env::var(ENV_NCBI_KEY).ok().filter(|k| !k.is_empty()),
        )
    }

    pub fn with_base(mut self, base: impl Into<String>) -> Self {
        self.base = base.into();
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn requests_per_second(&self) -> u64 {
        self.limiter.capacity()
    }

    fn url(&self, endpoint: &str, params: &[(&str, String)]) -> String {
        let mut u = Url::parse(&format!("{}{endpoint}", self.base)).expect("valid base url");
        {
            let mut q = u.query_pairs_mut();
            for (k, v) in params {
                q.append_pair(k, v);
            }
            if let Some(key) = &self.api_key {
                q.append_pair("api_key", key);
            }
        }
        u.to_string()
    }

    pub fn esearch_url(&self, strategy: &QueryStrategy) -> String {
        let mut params = vec![
            ("db", "pubmed".to_string()),
            ("term", strategy.render()),
            ("retmode", "json".to_string()),
            ("retmax", strategy.retmax.to_string()),
        ];
        if strategy.min_date.is_some() || strategy.max_date.is_some() {
            let lo = strategy
                .min_date
                .map_or("1800/01/01".to_string(), |d| d.format("%Y/%m/%d").to_string());
            let hi = strategy
                .max_date
                .map_or("3000/12/31".to_string(), |d| d.format("%Y/%m/%d").to_string());
            params.push(("datetype", "pdat".into()));
            params.push(("mindate", lo));
            params.push(("maxdate", hi));
        }
        self.url("esearch.fcgi", &params)
    }

    pub fn efetch_url(&self, ids: &[String]) -> String {
        self.url(
            "efetch.fcgi",
            &[
                ("db", "pubmed".to_string()),
                ("id", ids.join(",")),
                ("retmode", "xml".to_string()),
            ],
        )
    }

    fn fetch(&self, url: &str) -> Result<String, LitError> {
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts {
            if attempt > 1 {
                self.retry.pause(attempt - 1);
            }
            self.limiter.acquire(1);
            match self.transport.get(url) {
                Ok(r) if r.status == 200 => return Ok(r.body),
                Ok(r) if r.status == 429 || r.status >= 500 => last = format!("HTTP {}", r.status),
                Ok(r) => return Err(LitError::Http { status: r.status }),
                Err(e) => last = e.0,
            }
            log::warn!("E-utilities request failed (attempt {attempt}): {last}");
        }
        Err(LitError::Transport {
            attempts: self.retry.max_attempts,
            last,
        })
    }
}

impl LiteratureSource for EutilsClient {
    fn search(&self, strategy: &QueryStrategy) -> Result<Vec<LiteratureRecord>, LitError> {
        let ids = parse_esearch(&self.fetch(&self.esearch_url(strategy))?)?;
        if ids.is_empty() {
            return Ok(Vec::new());
        }
        let mut records = parse_efetch(&self.fetch(&self.efetch_url(&ids))?)?;
        let rank: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        records.retain(|r| rank.contains_key(r.pmid.as_str()));
        records.sort_by_key(|r| rank[r.pmid.as_str()]);
        Ok(records)
    }
}

pub fn parse_esearch(body: &str) -> Result<Vec<String>, LitError> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| LitError::Protocol(format!("esearch reply: {e}")))?;
    let result = v
        .get("esearchresult")
        .ok_or_else(|| LitError::Protocol("esearch reply lacks esearchresult".into()))?;
    if let Some(err) = result.get("ERROR").and_then(|e| e.as_str()) {
        return Err(LitError::Protocol(format!("esearch error: {err}")));
    }
    let list = result
        .get("idlist")
        .and_then(|l| l.as_array())
        .ok_or_else(|| LitError::Protocol("esearch reply lacks idlist".into()))?;
    list.iter()
        .map(|id| {
            id.as_str()
                .map(str::to_string)
                .ok_or_else(|| LitError::Protocol("non-string id in idlist".into()))
        })
        .collect()
}

fn child<'a, 'i>(n: Node<'a, 'i>, tag: &str) -> Option<Node<'a, 'i>> {
    n.children().find(|c| c.has_tag_name(tag))
}

fn text_of(n: Node<'_, '_>) -> String {
    let raw: String = n.descendants().filter(|d| d.is_text()).filter_map(|d| d.text()).collect();
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn month_number(s: &str) -> Option<u32> {
    if let Ok(m) = s.parse::<u32>() {
        return (1..=12).contains(&m).then_some(m);
    }
    const NAMES: [&str; 12] = ["jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"];
    let lower = s.to_ascii_lowercase();
    NAMES
        .iter()
        .position(|n| lower.starts_with(n))
        .map(|i| i as u32 + 1)
}

/// Resolves a PubDate element; a missing month or day resolves to the end
/// of the stated period.
fn pub_date(node: Node<'_, '_>) -> Option<NaiveDate> {
    let (year, month, day) = if let Some(md) = child(node, "MedlineDate") {
        let text = text_of(md);
        let mut parts = text.split_whitespace();
        let year: i32 = parts.next()?.get(..4)?.parse().ok()?;
        let month = parts.next().and_then(month_number);
        (year, month, None)
    } else {
        let year: i32 = text_of(child(node, "Year")?).parse().ok()?;
        let month = child(node, "Month").and_then(|m| month_number(&text_of(m)));
        let day = child(node, "Day").and_then(|d| text_of(d).parse::<u32>().ok());
        (year, month, day)
    };
    match (month, day) {
        (Some(m), Some(d)) => NaiveDate::from_ymd_opt(year, m, d),
        (Some(m), None) => last_day_of_month(year, m),
        (None, _) => NaiveDate::from_ymd_opt(year, 12, 31),
    }
}

/// Extracts records from an efetch PubmedArticleSet. Articles without a
/// usable publication date are skipped.
pub fn parse_efetch(body: &str) -> Result<Vec<LiteratureRecord>, LitError> {
    let doc = Document::parse(body).map_err(|e| LitError::Protocol(format!("efetch xml: {e}")))?;
    let mut out = Vec::new();
    for article in doc.descendants().filter(|n| n.has_tag_name("PubmedArticle")) {
        let Some(cit) = child(article, "MedlineCitation") else {
            continue;
        };
        let Some(pmid) = child(cit, "PMID").map(text_of).filter(|p| !p.is_empty()) else {
            return Err(LitError::Protocol("PubmedArticle without PMID".into()));
        };
        let Some(art) = child(cit, "Article") else {
            continue;
        };
        let title = child(art, "ArticleTitle").map(text_of).unwrap_or_default();
        let abstract_text = child(art, "Abstract")
            .map(|a| {
                a.children()
                    .filter(|c| c.has_tag_name("AbstractText"))
                    .map(|t| match t.attribute("Label") {
                        Some(label) => format!("{label}: {}", text_of(t)),
                        None => text_of(t),
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .unwrap_or_default();
        let date = child(art, "Journal")
            .and_then(|j| child(j, "JournalIssue"))
            .and_then(|ji| child(ji, "PubDate"))
            .and_then(pub_date);
        let Some(pub_date) = date else {
            log::warn!("PMID {pmid}: no usable publication date; skipped");
            continue;
        };
        let mesh_terms = child(cit, "MeshHeadingList")
            .map(|l| {
                l.children()
                    .filter(|h| h.has_tag_name("MeshHeading"))
                    .filter_map(|h| child(h, "DescriptorName").map(text_of))
                    .collect()
            })
            .unwrap_or_default();
        out.push(LiteratureRecord {
            pmid,
            title,
            abstract_text,
            pub_date,
            mesh_terms,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lit::{Field, TermGroup};

    const XML: &str = r#"<?xml version="1.0"?>
<PubmedArticleSet>
 <PubmedArticle><MedlineCitation><PMID Version="1">111</PMID><Article>
  <Journal><JournalIssue><PubDate><Year>2021</Year><Month>Mar</Month></PubDate></JournalIssue></Journal>
  <ArticleTitle>GPR153 in <i>vascular</i> injury</ArticleTitle>
  <Abstract><AbstractText Label="BACKGROUND">First.</AbstractText><AbstractText>Second.</AbstractText></Abstract>
 </Article><MeshHeadingList><MeshHeading><DescriptorName>Neointima</DescriptorName></MeshHeading></MeshHeadingList></MedlineCitation></PubmedArticle>
 <PubmedArticle><MedlineCitation><PMID>222</PMID><Article>
  <Journal><JournalIssue><PubDate><MedlineDate>1998 Dec-1999 Jan</MedlineDate></PubDate></JournalIssue></Journal>
  <ArticleTitle>Old</ArticleTitle>
 </Article></MedlineCitation></PubmedArticle>
</PubmedArticleSet>"#;

    fn strategy() -> QueryStrategy {
        QueryStrategy {
            groups: vec![TermGroup {
                terms: vec!["GPR153".into()],
                field: Field::Mesh,
            }],
            min_date: None,
            max_date: NaiveDate::from_ymd_opt(2022, 12, 31),
            retmax: 5,
        }
    }

    #[test]
    fn efetch_fields() {
        let recs = parse_efetch(XML).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].title, "GPR153 in vascular injury");
        assert_eq!(recs[0].abstract_text, "BACKGROUND: First. Second.");
        assert_eq!(recs[0].pub_date, NaiveDate::from_ymd_opt(2021, 3, 31).unwrap());
        assert_eq!(recs[0].mesh_terms, ["Neointima"]);
        assert_eq!(recs[1].pub_date, NaiveDate::from_ymd_opt(1998, 12, 31).unwrap());
    }

    #[test]
    fn esearch_url_params() {
        let c = EutilsClient::new(Box::new(ReplayTransport::default()), Some("secret".into()));
        let url = c.esearch_url(&strategy());
        assert!(url.contains("db=pubmed"));
        assert!(url.contains("datetype=pdat"));
        assert!(url.contains("maxdate=2022%2F12%2F31"));
        assert!(url.contains("api_key=secret"));
        assert!(!replay_key(&url).contains("secret"));
        assert_eq!(c.requests_per_second(), 10);
    }

    #[test]
    fn replayed_search_in_id_order() {
        let keyless = EutilsClient::new(Box::new(ReplayTransport::default()), None);
        let mut t = ReplayTransport::default();
        t.insert(
            &keyless.esearch_url(&strategy()),
            HttpReply {
                status: 200,
                body: r#"{"esearchresult":{"count":"2","idlist":["222","111"]}}"#.into(),
            },
        );
        t.insert(
            &keyless.efetch_url(&["222".into(), "111".into()]),
            HttpReply {
                status: 200,
                body: XML.into(),
            },
        );
        let c = EutilsClient::new(Box::new(t), None);
        assert_eq!(c.requests_per_second(), 3);
        let recs = c.search(&strategy()).unwrap();
        assert_eq!(recs.iter().map(|r| r.pmid.as_str()).collect::<Vec<_>>(), ["222", "111"]);
    }

    #[test]
    fn malformed_esearch_is_protocol_error() {
        assert!(matches!(parse_esearch("<html/>"), Err(LitError::Protocol(_))));
        assert_eq!(
            parse_esearch(r#"{"esearchresult":{"idlist":[]}}"#).unwrap(),
            Vec::<String>::new()
        );
    }
}
