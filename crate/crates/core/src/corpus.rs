//! Corpus ingestion: articles, companies, and the company -> article
//! mention index.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read};

use aho_corasick::AhoCorasick;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Article {
    pub id: String,
    pub date: String,
    pub title: String,
    pub body: String,
}

impl Article {
    pub fn parsed_date(&self) -> Result<NaiveDate> {
        NaiveDate::parse_from_str(&self.date, "%Y-%m-%d").map_err(|e| Error::Parse {
            line: 0,
            msg: format!("article {}: bad date {:?}: {e}", self.id, self.date),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Company {
    pub id: String,
    pub canonical_name: String,
    pub aliases: Vec<String>,
}

impl Company {
    fn names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.canonical_name.as_str()).chain(self.aliases.iter().map(|s| s.as_str()))
    }
}

/// Sorted, deduplicated article indices per company id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MentionIndex {
    pub by_company: BTreeMap<String, Vec<u32>>,
}

impl MentionIndex {
    pub fn articles_of(&self, company_id: &str) -> &[u32] {
        self.by_company
            .get(company_id)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }
}

/// Parses one JSON record per line with fields id/date/title/body. Order is
/// preserved; duplicate ids and malformed lines are rejected with their line
/// numbers.
pub fn load_articles<R: Read>(source: R) -> Result<Vec<Article>> {
    let mut reader = BufReader::new(source);
    let mut raw = Vec::new();
    let mut articles = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut line_no = 0;
    loop {
        raw.clear();
        line_no += 1;
        if reader.read_until(b'\n', &mut raw)? == 0 {
            break;
        }
        let line = std::str::from_utf8(&raw).map_err(|_| Error::InvalidUtf8 { line: line_no })?;
        if line.trim().is_empty() {
            continue;
        }
        let article: Article = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        article.parsed_date().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("unparseable date {:?}", article.date),
        })?;
        if let Some(&first) = seen.get(&article.id) {
            return Err(Error::DuplicateId {
                id: article.id,
                first_line: first,
                line: line_no,
            });
        }
        seen.insert(article.id.clone(), line_no);
        articles.push(article);
    }
    Ok(articles)
}

/// Comma-separated rows: id, canonical_name, then any number of aliases.
pub fn load_companies<R: Read>(source: R) -> Result<Vec<Company>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut companies = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: csv_error_line(&e),
            msg: e.to_string(),
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(0);
        let mut fields = record.iter();
        let id = fields
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Parse {
                line,
                msg: "missing field id".into(),
            })?
            .to_string();
        let canonical_name = fields
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Parse {
                line,
                msg: format!("company {id}: missing field canonical_name"),
            })?
            .to_string();
        let aliases: Vec<String> = fields
            .filter(|s| !s.is_empty())
            .map(|s| s.to_string())
            .collect();
        if let Some(&first) = seen.get(&id) {
            return Err(Error::DuplicateId {
                id,
                first_line: first,
                line,
            });
        }
        seen.insert(id.clone(), line);
        companies.push(Company {
            id,
            canonical_name,
            aliases,
        });
    }
    Ok(companies)
}

fn csv_error_line(e: &csv::Error) -> usize {
    match e.kind() {
        csv::ErrorKind::Utf8 { pos, .. } => pos.as_ref().map(|p| p.line() as usize).unwrap_or(0),
        _ => e.position().map(|p| p.line() as usize).unwrap_or(0),
    }
}

/// A company is mentioned iff its canonical name or any alias occurs as a
/// contiguous substring of the title or body. Comparison is byte-exact.
pub fn detect_mentions(article: &Article, companies: &[Company]) -> HashSet<String> {
    let mut hits = HashSet::new();
    for company in companies {
        let found = company
            .names()
            .any(|name| article.title.contains(name) || article.body.contains(name));
        if found {
            hits.insert(company.id.clone());
        }
    }
    hits
}

/// Builds the full index with one multi-pattern automaton pass per article;
/// semantics match [`detect_mentions`] exactly. Repeats inside one article
/// collapse to a single entry.
pub fn build_mention_index(articles: &[Article], companies: &[Company]) -> MentionIndex {
    let mut patterns: Vec<&str> = Vec::new();
    let mut owners: Vec<usize> = Vec::new();
    for (ci, company) in companies.iter().enumerate() {
        for name in company.names() {
            if name.is_empty() {
                continue;
            }
            patterns.push(name);
            owners.push(ci);
        }
    }
    let mut index = MentionIndex::default();
    for company in companies {
        index.by_company.insert(company.id.clone(), Vec::new());
    }
    if patterns.is_empty() {
        return index;
    }
    let ac = AhoCorasick::new(&patterns).expect("company name automaton");
    let mut mentioned = vec![false; companies.len()];
    for (ai, article) in articles.iter().enumerate() {
        mentioned.fill(false);
        for text in [&article.title, &article.body] {
            for m in ac.find_overlapping_iter(text) {
                mentioned[owners[m.pattern().as_usize()]] = true;
            }
        }
        for (ci, hit) in mentioned.iter().enumerate() {
            if *hit {
                index
                    .by_company
                    .get_mut(&companies[ci].id)
                    .expect("preinserted")
                    .push(ai as u32);
            }
        }
    }
    // Article order already makes the lists sorted and unique; keep the
    // contract explicit anyway.
    for list in index.by_company.values_mut() {
        list.sort_unstable();
        list.dedup();
    }
    index
}

/// Inclusive (min, max) article date range, or None for an empty corpus.
pub fn date_window(articles: &[Article]) -> Result<Option<(NaiveDate, NaiveDate)>> {
    let mut window: Option<(NaiveDate, NaiveDate)> = None;
    for article in articles {
        let d = article.parsed_date()?;
        window = Some(match window {
            None => (d, d),
            Some((lo, hi)) => (lo.min(d), hi.max(d)),
        });
    }
    Ok(window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn article(id: &str, title: &str, body: &str) -> Article {
        Article {
            id: id.into(),
            date: "2017-03-01".into(),
            title: title.into(),
            body: body.into(),
        }
    }

    fn company(id: &str, name: &str, aliases: &[&str]) -> Company {
        Company {
            id: id.into(),
            canonical_name: name.into(),
            aliases: aliases.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn loads_two_articles_in_order() {
        let src = concat!(
            r#"{"id":"a1","date":"2017-01-02","title":"t1","body":"b1"}"#,
            "\n",
            r#"{"id":"a2","date":"2017-01-03","title":"t2","body":"b2"}"#,
            "\n"
        );
        let articles = load_articles(src.as_bytes()).unwrap();
        assert_eq!(articles.len(), 2);
        assert_eq!(articles[0].id, "a1");
        assert_eq!(articles[1].id, "a2");
    }

    #[test]
    fn missing_body_names_the_field() {
        let src = r#"{"id":"a1","date":"2017-01-02","title":"t1"}"#;
        match load_articles(src.as_bytes()) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 1);
                assert!(msg.contains("body"), "message was {msg:?}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_article_id_cites_both_lines() {
        let rec = |id: &str| format!(r#"{{"id":"{id}","date":"2017-01-02","title":"t","body":"b"}}"#);
        let src = format!(
            "{}\n{}\n{}\n{}\n{}\n{}\n{}\n",
            rec("a1"),
            rec("a2"),
            rec("dup"),
            rec("a4"),
            rec("a5"),
            rec("a6"),
            rec("dup")
        );
        match load_articles(src.as_bytes()) {
            Err(Error::DuplicateId {
                id,
                first_line,
                line,
            }) => {
                assert_eq!(id, "dup");
                assert_eq!(first_line, 3);
                assert_eq!(line, 7);
            }
            other => panic!("expected duplicate-key error, got {other:?}"),
        }
    }

    #[test]
    fn companies_parse_with_variable_alias_tail() {
        let src = "c1,中国人寿,人寿,国寿\nc2,建设银行\n";
        let companies = load_companies(src.as_bytes()).unwrap();
        assert_eq!(companies.len(), 2);
        assert_eq!(companies[0].aliases, vec!["人寿", "国寿"]);
        assert!(companies[1].aliases.is_empty());
    }

    #[test]
    fn duplicate_company_id_rejected() {
        let src = "c1,甲\nc1,乙\n";
        assert!(matches!(
            load_companies(src.as_bytes()),
            Err(Error::DuplicateId { .. })
        ));
    }

    #[test]
    fn detects_name_in_body() {
        let companies = vec![company("c1", "中国人寿", &[])];
        let a = article("a1", "无关标题", "今天中国人寿发布了公告");
        assert_eq!(detect_mentions(&a, &companies), HashSet::from(["c1".to_string()]));
    }

    #[test]
    fn no_names_means_empty_set() {
        let companies = vec![company("c1", "中国人寿", &["国寿"])];
        let a = article("a1", "标题", "没有提到任何公司");
        assert!(detect_mentions(&a, &companies).is_empty());
    }

    #[test]
    fn alias_in_title_only_counts() {
        let companies = vec![company("c1", "中国人寿", &["国寿"])];
        let a = article("a1", "国寿年报", "正文不含名称");
        assert_eq!(detect_mentions(&a, &companies), HashSet::from(["c1".to_string()]));
    }

    #[test]
    fn latin_aliases_are_case_exact() {
        let companies = vec![company("c1", "Acme Corp", &["ACME"])];
        let lower = article("a1", "", "acme corp report");
        assert!(detect_mentions(&lower, &companies).is_empty());
        let exact = article("a2", "", "ACME report");
        assert_eq!(detect_mentions(&exact, &companies).len(), 1);
    }

    #[test]
    fn index_dedups_repeat_mentions_within_one_article() {
        let companies = vec![company("x", "甲公司", &[])];
        let articles = vec![
            article("a1", "甲公司", "甲公司甲公司"),
            article("a2", "无", "无"),
            article("a3", "无", "无"),
        ];
        let idx = build_mention_index(&articles, &companies);
        assert_eq!(idx.articles_of("x"), &[0]);
    }

    #[test]
    fn empty_corpus_gives_empty_lists() {
        let companies = vec![company("x", "甲公司", &[]), company("y", "乙公司", &[])];
        let idx = build_mention_index(&[], &companies);
        assert_eq!(idx.articles_of("x"), &[] as &[u32]);
        assert_eq!(idx.articles_of("y"), &[] as &[u32]);
    }

    #[test]
    fn planted_mentions_are_recovered_exactly() {
        // 20 articles; company Y injected into exactly 7 of them, chosen by
        // construction rather than detection.
        let companies = vec![company("y", "乙方股份", &["乙方"]), company("z", "丙方股份", &[])];
        let planted: HashSet<usize> = [1, 3, 4, 8, 13, 17, 19].into_iter().collect();
        let articles: Vec<Article> = (0..20)
            .map(|i| {
                let body = if planted.contains(&i) {
                    format!("第{i}篇提到乙方股份的报道")
                } else {
                    format!("第{i}篇普通报道")
                };
                article(&format!("a{i}"), "标题", &body)
            })
            .collect();
        let idx = build_mention_index(&articles, &companies);
        assert_eq!(idx.articles_of("y").len(), 7);
        let got: HashSet<usize> = idx.articles_of("y").iter().map(|&i| i as usize).collect();
        assert_eq!(got, planted);
        assert!(idx.articles_of("z").is_empty());
    }

    #[test]
    fn index_totals_cover_articles_with_any_mention() {
        let companies = vec![company("x", "甲公司", &[]), company("y", "乙公司", &[])];
        let articles = vec![
            article("a1", "", "甲公司与乙公司合作"),
            article("a2", "", "甲公司独家"),
            article("a3", "", "无关"),
        ];
        let idx = build_mention_index(&articles, &companies);
        let total: usize = idx.by_company.values().map(|v| v.len()).sum();
        let mentioned_articles = articles
            .iter()
            .filter(|a| !detect_mentions(a, &companies).is_empty())
            .count();
        assert!(total >= mentioned_articles);
        assert_eq!(total, 3);
        assert_eq!(mentioned_articles, 2);
    }

    proptest! {
        // The automaton-backed index must agree with the naive per-article
        // scan on arbitrary short texts and names.
        #[test]
        fn index_matches_naive_detection(
            bodies in proptest::collection::vec("[abc甲乙]{0,12}", 1..8),
            names in proptest::collection::vec("[abc甲乙]{1,4}", 1..5),
        ) {
            let companies: Vec<Company> = names
                .iter()
                .enumerate()
                .map(|(i, n)| company(&format!("c{i}"), n, &[]))
                .collect();
            let articles: Vec<Article> = bodies
                .iter()
                .enumerate()
                .map(|(i, b)| article(&format!("a{i}"), "", b))
                .collect();
            let idx = build_mention_index(&articles, &companies);
            for (ai, a) in articles.iter().enumerate() {
                let naive = detect_mentions(a, &companies);
                for c in &companies {
                    let in_index = idx.articles_of(&c.id).contains(&(ai as u32));
                    prop_assert_eq!(in_index, naive.contains(&c.id));
                }
            }
        }
    }
}
