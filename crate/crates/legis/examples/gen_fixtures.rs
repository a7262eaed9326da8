//! Writes the replay fixtures under `fixtures/` (or the directory given as the
//! first argument).
//!
//! Embeddings are synthetic and built so retrieval is exact: every cluster
//! owns a plane spanned by two axes, its bill query is `c*e_a + s*e_b`, and a
//! bill meant to score `t` against it is `t*q + sqrt(1 - t^2)*p` with `p` the
//! in-plane unit vector orthogonal to `q`. Planes of different clusters are
//! orthogonal, so a bill scores zero against every other cluster.
//!
//! Run with `cargo run -p legis --example gen_fixtures`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use legis::apis::ArchiveArticle;
use legis::http::{CassetteTransport, HttpRequest, HttpResponse};
use legis::ingest::normalize_text;
use legis::prompts::congress_years;
use serde_json::{json, Value};

const DIMENSION: usize = 32;
/// Recorded rank-1 score of the 113th immigration cluster.
const TOP_SCORE: f64 = 0.585201323;

struct ClusterSpec {
    name: &'static str,
    query: &'static str,
    summary: &'static str,
    /// Short topic phrase for titles and article text.
    topic: &'static str,
    articles: usize,
    /// Bills scoring at or above the threshold.
    matched: usize,
    /// How many of the matched bills became law.
    enacted: usize,
}

const fn cl(
    name: &'static str,
    query: &'static str,
    summary: &'static str,
    topic: &'static str,
    articles: usize,
    matched: usize,
    enacted: usize,
) -> ClusterSpec {
    ClusterSpec {
        name,
        query,
        summary,
        topic,
        articles,
        matched,
        enacted,
    }
}

fn congress_specs(congress: u32) -> Vec<ClusterSpec> {
    match congress {
        113 => vec![
            cl("Government Funding and Fiscal Showdowns", "government shutdown debt ceiling budget appropriations fiscal crisis",
               "Repeated budget standoffs, an October 2013 shutdown and debt limit fights ended in short-term deals.", "federal budget", 18, 6, 2),
            cl("Immigration Reform", "immigration reform pathway citizenship border security executive action",
               "A Senate-passed overhaul never came up in the House, and the President turned to executive action in 2014.", "immigration", 12, 100, 1),
            cl("Gun Control Legislation", "gun control background checks assault weapons Newtown filibuster",
               "After the Newtown shooting, background check legislation drew early support but fell short in the Senate.", "firearms", 14, 5, 0),
            cl("Congressional Dysfunction and Procedure", "congressional dysfunction filibuster reform productivity gridlock polarization",
               "Coverage focused on record-low productivity, the change to filibuster rules for nominees and policy moving elsewhere.", "Senate procedure", 22, 4, 0),
            cl("Foreign Policy and National Security", "foreign policy Iran sanctions Syria authorization NSA surveillance",
               "Iran sanctions, a possible Syria authorization and surveillance programs split both parties.", "national security", 11, 6, 1),
            cl("Healthcare and Affordable Care Act", "Affordable Care Act Obamacare repeal defund healthcare reform",
               "House votes to repeal or defund the 2010 health law went nowhere in the Senate and fed the shutdown.", "health insurance", 9, 5, 0),
            cl("Executive Action and Congressional Authority", "executive action executive order presidential power congressional authority",
               "With bills stalled, the White House relied on executive orders, raising separation of powers questions.", "executive power", 10, 3, 0),
            cl("Tax and Economic Policy", "tax reform economic policy minimum wage tax extenders",
               "Broad tax reform stalled; Congress settled for temporary extenders while wage and jobless aid bills stalled.", "tax policy", 8, 5, 1),
        ],
        114 => vec![
            cl("Highway and Transportation Funding", "surface transportation highway trust fund reauthorization transit",
               "Short-term patches gave way to a five-year surface transportation law.", "highways", 9, 5, 1),
            cl("Education Reform", "elementary secondary education No Child Left Behind replacement testing",
               "Congress replaced No Child Left Behind after years of waivers.", "schools", 7, 4, 1),
            cl("Medicare Physician Payment", "Medicare sustainable growth rate doc fix physician payment",
               "A bipartisan deal ended the annual scramble over Medicare physician payments.", "Medicare payment", 6, 4, 1),
            cl("Trade Promotion Authority", "trade promotion authority fast track Trans-Pacific Partnership",
               "Fast-track authority passed after a fight inside the President's own party.", "trade", 8, 5, 1),
            cl("Opioid Addiction", "opioid addiction treatment prevention recovery heroin",
               "Overdose deaths pushed Congress toward a treatment and prevention package.", "opioids", 7, 4, 1),
            cl("Budget Deals and Government Funding", "budget agreement spending caps omnibus appropriations shutdown",
               "Two-year budget deals raised spending caps and averted shutdowns.", "appropriations", 10, 5, 2),
            cl("Iran Nuclear Agreement Review", "Iran nuclear agreement congressional review sanctions relief",
               "Congress claimed a review period over the nuclear agreement with Iran.", "Iran diplomacy", 11, 3, 1),
            cl("Medical Research and Cures", "medical research cures NIH funding drug approval",
               "A cures package paired research money with changes to drug approval.", "biomedical research", 6, 4, 1),
            cl("Puerto Rico Debt Crisis", "Puerto Rico debt restructuring oversight board",
               "An oversight board and restructuring process answered the island's debt crisis.", "Puerto Rico finances", 6, 3, 1),
            cl("Gun Control After Mass Shootings", "gun violence background checks terror watch list firearms",
               "Mass shootings renewed calls for background checks, but proposals failed again.", "gun violence", 12, 5, 0),
        ],
        115 => vec![
            cl("Tax Cuts and Reform", "tax cuts corporate rate individual income tax overhaul",
               "Republicans passed a major tax overhaul through reconciliation.", "tax overhaul", 14, 6, 1),
            cl("Health Care Repeal and Replace", "repeal replace Affordable Care Act American Health Care Act",
               "The repeal effort passed the House but failed by one vote in the Senate.", "health law repeal", 16, 6, 0),
            cl("Immigration and DACA", "Deferred Action Childhood Arrivals Dreamers border wall immigration",
               "Talks over Dreamers and border security collapsed repeatedly.", "Dreamers", 13, 5, 0),
            cl("Government Funding and Shutdowns", "continuing resolution appropriations shutdown spending bill",
               "Spending fights produced two shutdowns and a string of stopgaps.", "federal spending", 11, 5, 2),
            cl("Russia Sanctions", "Russia sanctions election interference North Korea Iran sanctions",
               "Congress imposed sanctions on Russia over the President's objections.", "sanctions", 8, 3, 1),
            cl("Criminal Justice Reform", "criminal justice reform sentencing prison recidivism First Step",
               "A bipartisan sentencing and prison bill passed late in the session.", "sentencing", 7, 4, 1),
            cl("Opioid Crisis Response", "opioid crisis treatment recovery support substance use disorder",
               "A broad opioid package expanded treatment and recovery programs.", "addiction treatment", 7, 4, 1),
            cl("Infrastructure Investment", "infrastructure investment roads bridges public-private partnership",
               "Promised infrastructure spending never reached a floor vote.", "infrastructure", 9, 4, 0),
        ],
        116 => vec![
            cl("Government Funding and Shutdowns", "government funding lapse shutdown border wall appropriations",
               "The longest shutdown on record ended without wall funding, followed by omnibus deals.", "appropriations lapse", 15, 6, 2),
            cl("Climate Change", "climate change greenhouse gas emissions clean energy Green New Deal",
               "Climate resolutions drew attention but no major emissions bill passed.", "climate", 12, 5, 0),
            cl("Gun Control", "gun control universal background checks red flag laws",
               "House-passed background check bills stalled in the Senate.", "gun safety", 10, 4, 0),
            cl("COVID-19 Response and Relief", "coronavirus pandemic relief economic stimulus CARES Act",
               "Congress passed several rounds of pandemic relief.", "pandemic relief", 20, 7, 3),
            cl("Police Reform and Racial Justice", "police reform use of force qualified immunity racial justice",
               "Competing police reform bills never reconciled.", "policing", 11, 5, 0),
            cl("War Powers and Foreign Policy", "war powers Iran military force foreign policy arms sales",
               "War powers resolutions and defense authorizations shaped foreign policy fights.", "war powers", 9, 4, 1),
            cl("Tech Regulation and Privacy", "technology platforms data privacy antitrust social media",
               "Hearings on platforms and privacy produced no enacted framework.", "technology platforms", 8, 4, 0),
            cl("Congressional Procedure and Reform", "congressional modernization proxy voting House rules procedure",
               "The House changed its rules, including remote voting during the pandemic.", "House procedure", 7, 3, 1),
            cl("Healthcare Policy", "health care costs prescription drug prices surprise billing",
               "Drug pricing stalled, but surprise billing protections became law.", "health costs", 10, 5, 1),
            cl("Presidential Impeachment", "impeachment president abuse of power obstruction of Congress",
               "Two impeachments dominated coverage of the House.", "impeachment", 16, 3, 1),
        ],
        117 => vec![
            cl("COVID-19 Recovery", "American Rescue Plan pandemic recovery relief checks vaccines",
               "A large pandemic recovery law passed on party lines.", "pandemic recovery", 15, 5, 1),
            cl("Infrastructure Investment and Jobs", "bipartisan infrastructure roads bridges broadband transit",
               "A bipartisan infrastructure law funded roads, transit and broadband.", "public works", 13, 5, 1),
            cl("Gun Safety After Uvalde", "gun safety Uvalde red flag background checks young buyers",
               "After Uvalde, a narrow bipartisan gun safety law passed.", "firearm safety", 10, 4, 1),
            cl("Voting Rights and Elections", "voting rights election administration John Lewis Freedom to Vote",
               "Voting rights bills died at the filibuster.", "voting rights", 14, 5, 0),
            cl("Police Accountability", "police accountability George Floyd Justice in Policing",
               "Police accountability talks ended without agreement.", "police accountability", 8, 4, 0),
            cl("Immigration Overhaul", "immigration overhaul citizenship farm workers asylum",
               "Immigration bills passed the House but stalled in the Senate.", "immigration law", 9, 4, 0),
            cl("Filibuster and Senate Rules", "filibuster Senate rules nuclear option talking filibuster",
               "An attempt to change the filibuster for voting bills failed.", "Senate rules", 11, 3, 0),
            cl("Paid Leave and Child Care", "paid family leave child care universal pre-K Build Back Better",
               "Social spending plans shrank and family programs were dropped.", "family benefits", 12, 5, 0),
            cl("Abortion Rights", "abortion rights Roe v. Wade Women's Health Protection Act",
               "Bills to protect abortion access failed after the Dobbs ruling.", "abortion", 10, 4, 0),
            cl("Capitol Attack Investigation", "January 6 Capitol attack commission investigation",
               "An independent commission failed and the House formed a select committee.", "Capitol attack", 9, 3, 0),
        ],
        118 => vec![
            cl("Debt Ceiling Standoff", "debt ceiling default Fiscal Responsibility Act spending caps",
               "A debt limit deal averted default in exchange for spending caps.", "debt limit", 12, 4, 1),
            cl("Government Funding Fights", "continuing resolution appropriations shutdown threat stopgap",
               "Stopgap bills repeatedly averted shutdowns.", "stopgap spending", 13, 5, 2),
            cl("Foreign Aid for Ukraine and Israel", "Ukraine Israel Taiwan supplemental foreign aid",
               "A supplemental aid package passed after months of delay.", "foreign aid", 11, 4, 1),
            cl("Aviation Reauthorization", "FAA reauthorization aviation safety air traffic control",
               "Aviation programs were reauthorized for five years.", "aviation", 6, 3, 1),
            cl("Border Security and Immigration", "border security asylum parole immigration enforcement",
               "A bipartisan border deal collapsed in the Senate.", "border enforcement", 14, 5, 0),
            cl("Speaker Election and House Rules", "Speaker election motion to vacate House rules",
               "A fifteen-ballot Speaker election and the first ouster of a Speaker dominated the House.", "House leadership", 10, 3, 0),
            cl("Family Tax Relief", "child tax credit expansion business tax relief",
               "A child tax credit deal passed the House but stalled in the Senate.", "child tax credit", 7, 4, 0),
            cl("Farm Bill", "farm bill agriculture nutrition crop insurance reauthorization",
               "The farm bill lapsed and was extended without a new law.", "agriculture", 6, 4, 0),
        ],
        _ => Vec::new(),
    }
}

const NOT_ENACTED_MARKERS: [&str; 5] = ["INTRODUCED", "REFERRED", "REPORTED", "PASSED_HOUSE", "PASSED_SENATE"];
const TITLE_SUFFIXES: [&str; 8] = [
    "Act",
    "Improvement Act",
    "Reform Act",
    "Accountability Act",
    "Modernization Act",
    "Protection Act",
    "Relief Act",
    "Transparency Act",
];
const ANGLES: [&str; 8] = [
    "lawmakers weigh next steps",
    "leaders trade blame as talks stall",
    "a committee schedules hearings",
    "negotiators return to the table",
    "a floor vote nears",
    "advocates press Congress",
    "a bipartisan group floats a compromise",
    "what the fight means for voters",
];

fn unit(axis: usize) -> Vec<f64> {
    let mut v = vec![0.0; DIMENSION];
    v[axis] = 1.0;
    v
}

fn mix(a: &[f64], wa: f64, b: &[f64], wb: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect()
}

struct Plane {
    q: Vec<f64>,
    p: Vec<f64>,
    axis: usize,
}

fn plane(index: usize) -> Plane {
    let (a, b) = (2 * index, 2 * index + 1);
    let c = TOP_SCORE;
    let s = (1.0 - c * c).sqrt();
    Plane {
        q: mix(&unit(a), c, &unit(b), s),
        p: mix(&unit(a), -s, &unit(b), c),
        axis: a,
    }
}

fn at_score(pl: &Plane, t: f64) -> Vec<f64> {
    mix(&pl.q, t, &pl.p, (1.0 - t * t).sqrt())
}

#[derive(Default)]
struct Recorder {
    vectors: BTreeMap<String, Vec<f64>>,
}

impl Recorder {
    fn add(&mut self, text: &str, v: Vec<f64>) {
        if let Some(old) = self.vectors.insert(text.to_string(), v.clone()) {
            assert_eq!(old, v, "text {text:?} recorded with two vectors");
        }
    }

    fn write(&self, path: &Path) {
        let mut out = String::new();
        for (text, vector) in &self.vectors {
            writeln!(out, "{}", json!({"text": text, "vector": vector})).unwrap();
        }
        std::fs::write(path, out).unwrap();
    }
}

fn jsonl(values: &[Value]) -> String {
    values.iter().map(|v| format!("{v}\n")).collect()
}

fn slug(s: &str) -> String {
    s.to_ascii_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect::<String>()
        .split('-')
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut cs = w.chars();
            match cs.next() {
                Some(f) if w.chars().all(|c| c.is_ascii_lowercase() || c == '-') => f.to_ascii_uppercase().to_string() + cs.as_str(),
                _ => w.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

struct BillGen {
    congress: u32,
    next_hr: u32,
    next_s: u32,
    n: usize,
}

impl BillGen {
    fn next_id(&mut self) -> String {
        self.n += 1;
        if self.n % 3 == 0 {
            self.next_s += 1;
            format!("{}-s-{}", self.congress, self.next_s)
        } else {
            self.next_hr += 7;
            format!("{}-hr-{}", self.congress, self.next_hr)
        }
    }
}

fn write_congress(root: &Path, congress: u32) {
    let dir = root.join(congress.to_string());
    std::fs::create_dir_all(&dir).unwrap();
    let specs = congress_specs(congress);
    let (start, end) = congress_years(congress);
    let mut rec = Recorder::default();
    let mut bills = Vec::new();
    let mut statuses = vec!["bill_id,status".to_string()];
    let mut articles = Vec::new();
    let mut gen = BillGen {
        congress,
        next_hr: 100,
        next_s: 1,
        n: 0,
    };
    let mut calls = Vec::new();
    let mut clusters = Vec::new();
    let mut first_gridlocked = true;

    for (i, spec) in specs.iter().enumerate() {
        let pl = plane(i);
        rec.add(spec.query, pl.q.clone());

        // Articles: headline + abstract in the cluster plane.
        let article_query = format!("news coverage of {} in Congress, {start}-{end}", spec.topic);
        rec.add(&article_query, unit(pl.axis));
        let mut texts = Vec::new();
        for k in 0..spec.articles {
            let t = 0.9 - 0.3 * k as f64 / spec.articles.max(1) as f64;
            let year = if k % 2 == 0 { start } else { end };
            let month = (k * 5 + i) % 12 + 1;
            let headline = format!("{}: {}", title_case(spec.topic), ANGLES[(k + i) % ANGLES.len()]);
            let abstract_text = format!("Coverage of {} in the {}th Congress, item {}.", spec.topic, congress, k + 1);
            let a = ArchiveArticle {
                url: format!("https://archive.example.org/{year}/{month:02}/{}-{}.html", slug(spec.topic), k + 1),
                pub_date: format!("{year}-{month:02}-{:02}T12:00:00Z", (k % 27) + 1),
                headline,
                abstract_text,
            };
            let text = normalize_text(&format!("{} {}", a.headline, a.abstract_text));
            rec.add(&text, mix(&unit(pl.axis), t, &unit(pl.axis + 1), (1.0 - t * t).sqrt()));
            texts.push(text);
            let mut line = serde_json::to_value(&a).unwrap();
            line["year"] = json!(year);
            line["month"] = json!(month);
            articles.push(line);
        }
        calls.push(json!({
            "call_id": format!("a{}", i + 1),
            "tool_name": "search_article_archives",
            "arguments": {"query": article_query, "start_year": start, "end_year": end},
        }));
        clusters.push(json!({
            "name": spec.name,
            "articles": texts.iter().take(3).collect::<Vec<_>>(),
            "article_count": spec.articles,
            "summary": spec.summary,
            "query": spec.query,
        }));

        // Bills: `matched` at or above 0.4, two below.
        let mut scored: Vec<(String, f64, bool)> = Vec::new();
        let immigration_113 = congress == 113 && spec.name == "Immigration Reform";
        for k in 0..spec.matched {
            let id = if immigration_113 && k == 0 {
                "113-s-1".to_string()
            } else {
                gen.next_id()
            };
            let t = if immigration_113 && k == 0 {
                TOP_SCORE
            } else {
                0.41 + 0.17 * (spec.matched - k) as f64 / (spec.matched + 1) as f64
            };
            // Enacted bills sit in the middle of the ranking, never at rank 1.
            let enacted = k >= 1 && k <= spec.enacted;
            scored.push((id, t, enacted));
        }
        for k in 0..2 {
            let enacted = spec.enacted == 0 && first_gridlocked && k == 0;
            scored.push((gen.next_id(), 0.35 - 0.1 * k as f64, enacted));
        }
        if spec.enacted == 0 {
            first_gridlocked = false;
        }
        for (k, (id, t, enacted)) in scored.iter().enumerate() {
            let (title, summary) = if id == "113-s-1" {
                (
                    "Immigration Reform that Works for America's Future Act".to_string(),
                    "<p>Immigration Reform that Works for America's Future Act - Expresses the sense of Congress that the immigration system should be reformed to secure the borders, modernize legal immigration and provide a path to citizenship.</p>".to_string(),
                )
            } else {
                let title = format!(
                    "{} {} of {}",
                    title_case(spec.topic),
                    TITLE_SUFFIXES[(k + i) % TITLE_SUFFIXES.len()],
                    if k % 2 == 0 { start } else { end }
                );
                let summary = format!(
                    "<p>{title} - Addresses {} (bill {id}).</p><p>Directs the relevant agencies to report to Congress.</p>",
                    spec.topic
                );
                (title, summary)
            };
            let v = if id == "113-s-1" { unit(pl.axis) } else { at_score(&pl, *t) };
            rec.add(&normalize_text(&summary), v);
            let month = (k % 12) + 1;
            bills.push(json!({
                "bill_id": id,
                "title": title,
                "summary": summary,
                "introduced_date": format!("{}-{month:02}-15", if k % 2 == 0 { start } else { end }),
            }));
            // One bill per Congress is left out of the status file to exercise
            // the unknown-status path; it is never an enacted one.
            if congress == 117 && i == 3 && k == 1 {
                continue;
            }
            let marker = if *enacted {
                "BECAME_PUBLIC_LAW"
            } else {
                NOT_ENACTED_MARKERS[(k + i) % NOT_ENACTED_MARKERS.len()]
            };
            statuses.push(format!("{id},{marker}"));
        }
    }

    // Off-topic articles that no cluster query reaches.
    for k in 0..5 {
        let a = ArchiveArticle {
            url: format!("https://archive.example.org/{start}/06/arts-{}.html", k + 1),
            pub_date: format!("{start}-06-{:02}T12:00:00Z", k + 1),
            headline: format!("Gallery season opens, part {}", k + 1),
            abstract_text: "A review of new exhibitions.".into(),
        };
        let text = normalize_text(&format!("{} {}", a.headline, a.abstract_text));
        rec.add(&text, unit(DIMENSION - 1));
        let mut line = serde_json::to_value(&a).unwrap();
        line["year"] = json!(start);
        line["month"] = json!(6);
        articles.push(line);
    }

    let answer = json!({ "clusters": clusters }).to_string();
    let script = jsonl(&[json!({"kind": "tool_calls", "calls": calls}), json!({"kind": "text", "text": answer})]);
    std::fs::write(dir.join("manifest.json"), json!({"congress": congress, "dimension": DIMENSION}).to_string() + "\n").unwrap();
    std::fs::write(
        dir.join("agent.jsonl"),
        format!("# Step 1 for the {congress}th Congress: article searches, then the cluster list.\n{script}"),
    )
    .unwrap();
    std::fs::write(dir.join("bills.jsonl"), jsonl(&bills)).unwrap();
    std::fs::write(dir.join("articles.jsonl"), jsonl(&articles)).unwrap();
    std::fs::write(dir.join("bill_status.csv"), statuses.join("\n") + "\n").unwrap();
    rec.write(&dir.join("embeddings.jsonl"));
}

const COMMITTEES: [&str; 6] = [
    "Appropriations",
    "Armed Services",
    "Finance",
    "Judiciary",
    "Foreign Affairs",
    "Energy and Commerce",
];

fn write_tables(root: &Path) {
    let dir = root.join("tables");
    std::fs::create_dir_all(&dir).unwrap();
    let mut ca = vec!["bioguide_id,congress,committee_name,is_chair".to_string()];
    let mut ms = vec!["bioguide_id,congress,les,nominate_dim1,nominate_dim2".to_string()];
    for m in 1..=40u32 {
        let id = format!("{}{:06}", (b'A' + (m % 26) as u8) as char, m);
        for congress in 113..=118u32 {
            if (m + congress) % 7 == 0 {
                continue;
            }
            for c in 0..(1 + (m + congress) % 3) {
                let name = COMMITTEES[((m + c + congress) % COMMITTEES.len() as u32) as usize];
                let chair = (m * 3 + congress + c) % 11 == 0;
                ca.push(format!("{id},{congress},{name},{}", u8::from(chair)));
            }
            let les = if (m + congress) % 9 == 0 {
                "NA".to_string()
            } else {
                format!("{:.3}", f64::from((m * 37 + congress * 11) % 400) / 100.0)
            };
            let d1 = f64::from((m * 53) % 200) / 200.0 - 0.5;
            let d2 = if m % 5 == 0 {
                String::new()
            } else {
                format!("{:.3}", f64::from((m * 29 + congress) % 200) / 100.0 - 1.0)
            };
            ms.push(format!("{id},{congress},{les},{d1:.3},{d2}"));
        }
    }
    let mut rc = vec!["bill_id,roll_number,yea,nay,result".to_string()];
    rc.push("113-s-1,168,68,32,Passed".into());
    for congress in 113..=118u32 {
        for n in 0..12u32 {
            let bill = format!("{congress}-hr-{}", 107 + 7 * n);
            for r in 0..(1 + n % 2) {
                let yea = 180 + (n * 13 + r * 7) % 90;
                let nay = 435 - yea - (n % 5);
                let result = if yea > nay { "Passed" } else { "Failed" };
                rc.push(format!("{bill},{},{yea},{nay},{result}", 100 + n * 10 + r));
            }
        }
    }
    for (name, rows) in [("committee_assignments", ca), ("member_scores", ms), ("roll_calls", rc)] {
        std::fs::write(dir.join(format!("{name}.csv")), rows.join("\n") + "\n").unwrap();
    }
}

fn write_http(root: &Path) {
    let dir = root.join("http");
    let ok = |body: Value| HttpResponse {
        status: 200,
        headers: BTreeMap::new(),
        body: body.to_string(),
    };
    let details = HttpRequest::get("/bill/113/s/1").param("format", "json");
    CassetteTransport::record(
        &dir,
        &details,
        vec![ok(json!({"bill": {
            "congress": 113, "type": "S", "number": "1",
            "title": "Immigration Reform that Works for America's Future Act",
            "introducedDate": "2013-01-22",
            "sponsors": [{"bioguideId": "R000146", "fullName": "Sen. Reid, Harry [D-NV]"}],
            "latestAction": {"actionDate": "2013-01-22", "text": "Read twice and referred to the Committee on the Judiciary."},
            "laws": []
        }}))],
    )
    .unwrap();
    let actions = HttpRequest::get("/bill/113/s/1/actions")
        .param("format", "json")
        .param("offset", 0)
        .param("limit", legis::apis::ACTIONS_PAGE_SIZE);
    CassetteTransport::record(
        &dir,
        &actions,
        vec![ok(json!({
            "actions": [
                {"actionDate": "2013-01-22", "text": "Introduced in Senate"},
                {"actionDate": "2013-01-22", "text": "Read twice and referred to the Committee on the Judiciary."}
            ],
            "pagination": {"count": 2}
        }))],
    )
    .unwrap();
    let member = HttpRequest::get("/member/R000146").param("format", "json");
    CassetteTransport::record(
        &dir,
        &member,
        vec![ok(json!({"member": {
            "bioguideId": "R000146", "directOrderName": "Harry Reid", "state": "Nevada",
            "terms": [
                {"chamber": "Senate", "congress": 112, "partyName": "Democratic"},
                {"chamber": "Senate", "congress": 113, "partyName": "Democratic"},
                {"chamber": "Senate", "congress": 114, "partyName": "Democratic"}
            ],
            "leadership": [{"type": "Majority Leader", "congress": 113}]
        }}))],
    )
    .unwrap();
}

fn write_session(root: &Path) {
    let script = jsonl(&[
        json!({"kind": "tool_calls", "calls": [{"call_id": "s1", "tool_name": "get_bill_status", "arguments": {"bill_id": "113-s-1"}}]}),
        json!({"kind": "text", "text": "S. 1 in the 113th Congress was not enacted; its recorded status is Not Enacted."}),
    ]);
    std::fs::write(root.join("session.jsonl"), format!("# Scripted chat session replies.\n{script}")).unwrap();
}

fn main() {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    for congress in 113..=118 {
        write_congress(&root, congress);
    }
    write_tables(&root);
    write_http(&root);
    write_session(&root);
    println!("fixtures written to {}", root.display());
}
