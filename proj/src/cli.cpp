#include "synth/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <sstream>

#include "synth/augment.hpp"
#include "synth/corpus.hpp"
#include "synth/csv.hpp"
#include "synth/detect.hpp"
#include "synth/error.hpp"
#include "synth/evalbench.hpp"
#include "synth/extract.hpp"
#include "synth/ingest.hpp"
#include "synth/its.hpp"
#include "synth/plot.hpp"
#include "synth/social.hpp"
#include "synth/text.hpp"
#include "synth/topics.hpp"

#include "CLI11.hpp"

namespace synth::cli {

namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pct4(double rate) { return fixed(rate * 100, 4); }

void require_file(const fs::path& p, const std::string& flag) {
  if (p.empty()) throw UsageError(flag + " is required");
  if (!fs::exists(p)) throw Error("no such file: " + p.string());
}

void require_value(const std::string& v, const std::string& flag) {
  if (v.empty()) throw UsageError(flag + " is required");
}

void write_output(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file(p, content);
}

Timestamp now_or(const std::string& iso) {
  if (iso.empty()) return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
  const auto t = parse_iso_timestamp(iso);
  if (!t) throw UsageError("--now: not an ISO 8601 timestamp: " + iso);
  return *t;
}

Date date_flag(const std::string& s, const std::string& flag) {
  const auto d = parse_date(s);
  if (!d) throw UsageError(flag + ": not a YYYY-MM-DD date: " + s);
  return *d;
}

std::string file_stem_for(const std::string& group) {
  std::string s = group;
  std::replace(s.begin(), s.end(), '/', '_');
  return s;
}

// The resolved options of a subcommand, one key=value per line.
std::string snapshot(const CLI::App& sub) {
  std::map<std::string, std::string> values;
  for (const auto* opt : sub.get_options()) {
    const auto& name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    std::string v;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) v += (v.empty() ? "" : ",") + r;
    } else {
      v = opt->get_default_str();
    }
    values[name] = v;
  }
  std::string out = "# synthnews " + sub.get_name() + "\n";
  for (const auto& [k, v] : values) out += k + '=' + v + '\n';
  return out;
}

// Each subcommand knows where its snapshot goes once parsed.
struct Command {
  CLI::App* app = nullptr;
  std::function<fs::path()> snapshot_path;
  std::function<int(std::ostream&, std::ostream&)> body;
};

fs::path beside(const std::string& out) { return out.empty() ? fs::path() : fs::path(out + ".config"); }
fs::path inside(const std::string& dir) { return dir.empty() ? fs::path() : fs::path(dir) / "synthnews.config"; }

// ---------------------------------------------------------------- crawl

struct CrawlArgs {
  std::string sites, state_dir, out, fixture_root, connect_to, scheme = "https", now, user_agent;
  int interval_ms = 1000, jobs = 4, max_retries = 3, timeout_ms = 30000, backoff_ms = 500;
  bool no_robots = false;
};

int crawl_cmd(const CrawlArgs& a, std::ostream& out) {
  require_file(a.sites, "--sites");
  require_value(a.state_dir, "--state-dir");
  require_value(a.out, "--out");
  ingest::CrawlPolicy policy;
  policy.per_domain_min_interval = std::chrono::milliseconds(a.interval_ms);
  policy.max_retries = a.max_retries;
  policy.timeout = std::chrono::milliseconds(a.timeout_ms);
  policy.backoff_base = std::chrono::milliseconds(a.backoff_ms);
  policy.obey_robots = !a.no_robots;
  if (!a.user_agent.empty()) policy.user_agent = a.user_agent;
  policy.validate();
  std::unique_ptr<ingest::Fetcher> fetcher;
  if (!a.fixture_root.empty()) {
    if (!fs::is_directory(a.fixture_root)) throw Error("no such directory: " + a.fixture_root);
    fetcher = std::make_unique<ingest::FixtureFetcher>(a.fixture_root);
  } else {
    fetcher = std::make_unique<ingest::HttpFetcher>(a.connect_to);
  }
  ingest::PoliteClient client(*fetcher, policy);
  ingest::CrawlOptions opts;
  opts.state_dir = a.state_dir;
  opts.out_dir = a.out;
  opts.scheme = a.scheme;
  opts.jobs = a.jobs;
  opts.now = now_or(a.now);
  const auto reports = ingest::crawl(load_sites(a.sites), client, opts);
  out << "domain,feeds,discovered,fetched,failed,skipped\n";
  for (const auto& r : reports) {
    out << r.domain << ',' << r.feeds << ',' << r.discovered << ',' << r.fetched << ',' << r.failed << ','
        << r.skipped << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- extract

struct ExtractArgs {
  std::string in, out;
  int jobs = 4;
};

int extract_cmd(const ExtractArgs& a, std::ostream& out) {
  require_value(a.in, "--in");
  require_value(a.out, "--out");
  if (!fs::is_directory(a.in)) throw Error("no such directory: " + a.in);
  extract::ExtractStats stats;
  const auto articles = extract::extract_pages(ingest::load_raw_pages(a.in), a.jobs, &stats);
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  store_articles(articles, a.out);
  out << "pages=" << stats.pages << " articles=" << stats.articles << " admitted=" << stats.admitted
      << " skipped=" << stats.skipped << " date_conflicts=" << stats.date_conflicts << '\n';
  for (const auto& [method, n] : stats.method_counts) out << "method " << method << '=' << n << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- augment

struct AugmentArgs {
  std::string in, out, fill_url, paraphrase_url, prompts_from, prompts_out;
  std::uint64_t seed = 0;
  double subsample = 1.0;
  int concurrency = 4, timeout_ms = 120000;
};

int augment_cmd(const AugmentArgs& a, std::ostream& out, std::ostream& err) {
  if (a.in.empty() && a.prompts_from.empty()) throw UsageError("--in or --prompts-from is required");
  if (!a.prompts_from.empty()) {
    require_file(a.prompts_from, "--prompts-from");
    require_value(a.prompts_out, "--prompts-out");
    std::vector<augment::Dropped> skipped;
    std::vector<ArticleRecord> admitted;
    for (auto& r : load_articles(a.prompts_from)) {
      if (r.admitted) admitted.push_back(std::move(r));
    }
    std::string body;
    for (const auto& p : augment::make_generation_prompts(admitted, &skipped)) {
      body += nlohmann::json{{"article_id", p.article_id}, {"prompt", p.text}}.dump() + '\n';
    }
    write_output(a.prompts_out, body);
    out << "prompts=" << admitted.size() - skipped.size() << " skipped=" << skipped.size() << '\n';
    for (const auto& s : skipped) err << "skipped " << s.id << ": " << s.reason << '\n';
  }
  if (a.in.empty()) return kExitOk;
  require_file(a.in, "--in");
  require_value(a.out, "--out");
  const auto base = load_labeled(a.in);
  std::vector<LabeledText> machine;
  augment::DatasetVariant baseline;
  for (const auto& t : base) {
    (t.label == Label::machine ? baseline.machine_ids : baseline.human_ids).insert(t.id);
    if (t.label == Label::machine) machine.push_back(t);
  }
  http::Options http_opts;
  http_opts.timeout = std::chrono::milliseconds(a.timeout_ms);
  std::unique_ptr<augment::SpanFiller> filler;
  if (a.fill_url.empty()) {
    filler = std::make_unique<augment::IdentityFiller>();
  } else {
    filler = std::make_unique<augment::RemoteFiller>(a.fill_url, http_opts);
  }
  std::unique_ptr<augment::Paraphraser> paraphraser;
  if (a.paraphrase_url.empty()) {
    paraphraser = std::make_unique<augment::IdentityParaphraser>();
  } else {
    paraphraser = std::make_unique<augment::RemoteParaphraser>(a.paraphrase_url, http_opts);
  }
  augment::AugmentOptions opts;
  opts.seed = a.seed;
  opts.concurrency = a.concurrency;
  opts.subsample = a.subsample;
  const auto pert = augment::perturb_all(machine, *filler, opts);
  const auto para = augment::paraphrase_all(machine, *paraphraser, opts);
  std::set<std::string> pert_ids, para_ids;
  for (const auto& t : pert.survivors) pert_ids.insert(t.id);
  for (const auto& t : para.survivors) para_ids.insert(t.id);

  std::vector<LabeledText> all;
  for (auto t : base) {
    t.variants = {Variant::Baseline, Variant::Pert, Variant::Para, Variant::PertPara};
    all.push_back(std::move(t));
  }
  all.insert(all.end(), pert.survivors.begin(), pert.survivors.end());
  all.insert(all.end(), para.survivors.begin(), para.survivors.end());
  store_labeled(all, a.out);

  out << "variant,human,machine,total\n";
  for (const auto v : {Variant::Baseline, Variant::Pert, Variant::Para, Variant::PertPara}) {
    const auto d = augment::build_variant(baseline, pert_ids, para_ids, v);
    out << to_string(v) << ',' << d.human_ids.size() << ',' << d.machine_ids.size() << ','
        << d.human_ids.size() + d.machine_ids.size() << '\n';
  }
  for (const auto& d : pert.dropped) err << "pert dropped " << d.id << ": " << d.reason << '\n';
  for (const auto& d : para.dropped) err << "para dropped " << d.id << ": " << d.reason << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- train-baseline

struct TrainArgs {
  std::string in, out, split = "train";
  int epochs = 30;
  double learning_rate = 2.0;
  std::uint64_t seed = 0;
};

int train_cmd(const TrainArgs& a, std::ostream& out) {
  require_file(a.in, "--in");
  require_value(a.out, "--out");
  if (a.split != "train" && a.split != "test" && a.split != "all") throw UsageError("--split: train, test or all");
  std::vector<LabeledText> data;
  for (auto& t : load_labeled(a.in)) {
    if (a.split == "all" || to_string(t.split) == a.split) data.push_back(std::move(t));
  }
  detect::TrainOptions opts;
  opts.epochs = a.epochs;
  opts.learning_rate = a.learning_rate;
  opts.seed = a.seed;
  detect::TrainReport report;
  const auto model = detect::train_baseline(data, opts, &report);
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  model.save(a.out);
  out << "model=" << model.model_id() << " examples=" << data.size() << '\n';
  for (std::size_t i = 0; i < report.epoch_losses.size(); ++i) {
    out << "epoch " << i + 1 << " loss " << fixed(report.epoch_losses[i], 6) << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- classify

struct ClassifyArgs {
  std::string in, model, remote, model_id = "remote", out, now;
  double tau = detect::kDefaultTau;
  int jobs = 4, batch_size = 16, timeout_ms = 30000;
};

int classify_cmd(const ClassifyArgs& a, std::ostream& out, std::ostream& err) {
  if (a.model.empty() == a.remote.empty()) throw UsageError("exactly one of --model or --remote is required");
  require_file(a.in, "--in");
  require_value(a.out, "--out");
  if (!(a.tau >= 0 && a.tau <= 1)) throw UsageError("--tau must lie in [0,1]");
  std::unique_ptr<detect::Detector> detector;
  if (!a.model.empty()) {
    require_file(a.model, "--model");
    detector = std::make_unique<detect::BaselineModel>(detect::BaselineModel::load(a.model));
  } else {
    http::Options http_opts;
    http_opts.timeout = std::chrono::milliseconds(a.timeout_ms);
    detector = std::make_unique<detect::RemoteScorer>(a.remote, a.model_id, http_opts);
  }
  detect::ClassifyOptions opts;
  opts.tau = a.tau;
  opts.jobs = a.jobs;
  opts.batch_size = static_cast<std::size_t>(std::max(1, a.batch_size));
  opts.now = now_or(a.now);
  const auto r = detect::classify_corpus(load_articles(a.in), *detector, a.out, opts);
  out << "model=" << detector->model_id() << " scored=" << r.scored << " resumed=" << r.resumed
      << " unscored=" << r.unscored << " skipped=" << r.skipped << '\n';
  for (const auto& [id, reason] : r.failures) err << "unscored " << id << ": " << reason << '\n';
  return r.unscored > 0 ? kExitRuntime : kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string manifest, out;
  double tau = detect::kDefaultTau;
  int jobs = 4;
};

int bench_cmd(const BenchArgs& a, std::ostream& out) {
  require_file(a.manifest, "--manifest");
  require_value(a.out, "--out");
  const auto manifest = evalbench::load_manifest(a.manifest);
  std::vector<evalbench::TestSet> sets;
  for (const auto& s : manifest.testsets) sets.push_back(evalbench::load_testset(s));
  std::vector<evalbench::Scorer> scorers;
  for (const auto& m : manifest.models) scorers.push_back(evalbench::make_scorer(m));
  const auto table = evalbench::run_suite(scorers, sets, a.tau, a.jobs);
  write_output(a.out, evalbench::to_csv(table));
  out << evalbench::to_text(table);
  return kExitOk;
}

// ---------------------------------------------------------------- prevalence

struct PrevalenceArgs {
  std::string articles, scores, sites, out, model_id, daily_out, adoption_out, top_month, top_out;
  int min_articles = 30, top_k = 10;
};

prevalence::Joined load_joined(const std::string& articles, const std::string& scores, const std::string& sites,
                               const std::string& model_id, std::vector<ArticleRecord>* keep = nullptr) {
  require_file(articles, "--articles");
  require_file(scores, "--scores");
  require_file(sites, "--sites");
  auto a = load_articles(articles);
  auto joined = prevalence::join(a, detect::load_scores(scores), load_sites(sites), model_id);
  if (keep) *keep = std::move(a);
  return joined;
}

int prevalence_cmd(const PrevalenceArgs& a, std::ostream& out) {
  require_value(a.out, "--out");
  const auto joined = load_joined(a.articles, a.scores, a.sites, a.model_id);
  const auto groups = prevalence::standard_groups();
  write_output(a.out, prevalence::to_csv(prevalence::monthly_prevalence(joined, groups)));
  if (!a.daily_out.empty()) write_output(a.daily_out, daily_csv(joined, groups));
  if (!a.adoption_out.empty() && !joined.observations.empty()) {
    const auto first = first_of_month(joined.observations.front().date);
    const auto last = add_days(joined.observations.back().date, 1);
    std::string csv;
    for (const auto cls : {Reliability::unreliable, Reliability::reliable}) {
      auto part = prevalence::adoption_csv(prevalence::adoption_series(joined, cls, first, last), cls);
      if (!csv.empty()) part.erase(0, part.find('\n') + 1);
      csv += part;
    }
    write_output(a.adoption_out, csv);
  }
  if (!a.top_out.empty()) {
    require_value(a.top_month, "--top-month");
    if (!parse_month(a.top_month)) throw UsageError("--top-month: not a YYYY-MM month: " + a.top_month);
    write_output(a.top_out, prevalence::top_sites_csv(prevalence::top_sites(
                                joined, a.top_month, std::nullopt, static_cast<std::size_t>(a.top_k),
                                static_cast<std::size_t>(a.min_articles))));
  }
  const auto& s = joined.stats;
  out << "model=" << joined.model_id << " articles=" << s.articles << " joined=" << s.joined
      << " not_admitted=" << s.not_admitted << " undated=" << s.undated << " unscored=" << s.unscored
      << " unknown_site=" << s.unknown_site << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- its

struct ItsArgs {
  std::string prevalence, intervention = "2022-11-30", out, gaps = "reject", order = "auto", aggregation = "micro";
  int cadence = 1, jobs = 4, max_iterations = 5000;
  double hessian_step = 1e-4;
};

its::Order parse_order(const std::string& s) {
  its::Order o;
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  if (!(in >> o.p >> c1 >> o.d >> c2 >> o.q) || c1 != ',' || c2 != ',' || in.peek() != EOF) {
    throw UsageError("--order: 'auto' or p,d,q: " + s);
  }
  return o;
}

int its_cmd(const ItsArgs& a, std::ostream& out, std::ostream& err) {
  require_file(a.prevalence, "--prevalence");
  require_value(a.out, "--out");
  const Date when = date_flag(a.intervention, "--intervention");
  if (a.gaps != "reject" && a.gaps != "interpolate") throw UsageError("--gaps: reject or interpolate");
  if (a.aggregation != "micro" && a.aggregation != "macro") throw UsageError("--aggregation: micro or macro");
  if (a.cadence < 1) throw UsageError("--cadence must be at least 1 day");
  const bool automatic = a.order == "auto";
  const its::Order fixed_order = automatic ? its::Order{} : parse_order(a.order);
  const auto policy = a.gaps == "reject" ? its::GapPolicy::reject : its::GapPolicy::interpolate;

  const auto rows = parse_csv(read_file(a.prevalence));
  if (rows.empty()) throw ParseError("empty daily prevalence file", 0);
  const auto& h = rows.front();
  const auto c_date = csv_column(h, "date"), c_group = csv_column(h, "group"), c_agg = csv_column(h, "aggregation"),
             c_pct = csv_column(h, "pct");
  std::vector<std::string> order;
  std::map<std::string, std::vector<its::SeriesPoint>> series;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != h.size()) throw ParseError("row " + std::to_string(i + 1) + " has the wrong width", i + 1);
    if (r[c_agg] != a.aggregation || r[c_group].rfind("ALL/", 0) == 0) continue;
    const auto d = parse_date(r[c_date]);
    if (!d) throw ParseError("row " + std::to_string(i + 1) + ": bad date", i + 1);
    if (!series.count(r[c_group])) order.push_back(r[c_group]);
    series[r[c_group]].push_back({*d, std::stod(r[c_pct])});
  }

  its::FitOptions fit_opts;
  fit_opts.max_iterations = a.max_iterations;
  fit_opts.hessian_step = a.hessian_step;
  std::vector<its::GroupFit> fits;
  std::vector<its::ITSSpec> specs;
  for (const auto& g : order) {
    auto pts = series[g];
    std::sort(pts.begin(), pts.end(), [](const auto& x, const auto& y) { return x.date < y.date; });
    try {
      const auto regular = its::resample(its::regularize_daily(pts, policy), a.cadence);
      const auto t0 = its::intervention_index(regular, when);
      Eigen::VectorXd y(static_cast<Eigen::Index>(regular.size()));
      for (std::size_t i = 0; i < regular.size(); ++i) y(static_cast<Eigen::Index>(i)) = regular[i].value;
      const auto slash = g.find('/');
      its::GroupFit gf{g.substr(0, slash), g.substr(slash + 1), {}};
      if (automatic) {
        gf.fit = its::select_order(y, t0, fit_opts).fit;
      } else {
        specs.push_back({y, t0, fixed_order});
      }
      fits.push_back(std::move(gf));
    } catch (const Error& e) {
      err << "skipping " << g << ": " << e.what() << '\n';
    }
  }
  if (!automatic) {
    const auto results = its::fit_many(specs, a.jobs, fit_opts);
    for (std::size_t i = 0; i < results.size(); ++i) fits[i].fit = results[i];
  }
  write_output(a.out, its::to_csv(fits));
  out << its::table_text(its::report_table(fits));
  return kExitOk;
}

// ---------------------------------------------------------------- topics

struct TopicsArgs {
  std::string articles, scores, sites, month, out, embed_url, model_id;
  std::vector<std::string> groups{"unreliable/ALL", "reliable/ALL"};
  double lambda = 0;  // 0 selects the data-driven default
  int n = 2, keywords = 3, min_support = 5, jobs = 4, timeout_ms = 120000;
};

int topics_cmd(const TopicsArgs& a, std::ostream& out) {
  require_value(a.out, "--out");
  require_value(a.month, "--month");
  if (!parse_month(a.month)) throw UsageError("--month: not a YYYY-MM month: " + a.month);
  if (a.lambda < 0) throw UsageError("--lambda must be positive");
  std::vector<prevalence::Group> groups;
  for (const auto& g : a.groups) groups.push_back(parse_group(g));
  std::vector<ArticleRecord> articles;
  const auto joined = load_joined(a.articles, a.scores, a.sites, a.model_id, &articles);
  std::unique_ptr<topics::Embedder> embedder;
  if (a.embed_url.empty()) {
    embedder = std::make_unique<topics::HashedTfidf>(a.jobs);
  } else {
    http::Options http_opts;
    http_opts.timeout = std::chrono::milliseconds(a.timeout_ms);
    embedder = std::make_unique<topics::RemoteEmbedder>(a.embed_url, http_opts);
  }
  topics::TopicOptions opts;
  if (a.lambda > 0) opts.lambda = a.lambda;
  opts.n = static_cast<std::size_t>(a.n);
  opts.keywords = static_cast<std::size_t>(a.keywords);
  opts.min_support = static_cast<std::size_t>(a.min_support);
  opts.jobs = a.jobs;
  std::vector<topics::TopicRow> rows;
  for (const auto& g : groups) {
    auto part = topics::top_topics(joined, articles, g, a.month, *embedder, opts);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  const auto csv = topics::to_csv(rows);
  write_output(a.out, csv);
  out << csv;
  return kExitOk;
}

// ---------------------------------------------------------------- social

struct SocialArgs {
  std::string dump, articles, scores, sites, out, summary_out, from, to, model_id;
  double max_malformed = 0.01;
};

int social_cmd(const SocialArgs& a, std::ostream& out) {
  require_file(a.dump, "--dump");
  require_value(a.out, "--out");
  social::IngestOptions ingest_opts;
  if (!a.from.empty()) ingest_opts.from = date_flag(a.from, "--from");
  if (!a.to.empty()) ingest_opts.to = date_flag(a.to, "--to");
  ingest_opts.max_malformed_fraction = a.max_malformed;
  social::IngestStats stats;
  const auto submissions = social::ingest_dump_file(a.dump, ingest_opts, &stats);
  std::vector<ArticleRecord> articles;
  const auto joined = load_joined(a.articles, a.scores, a.sites, a.model_id, &articles);
  const auto sites = load_sites(a.sites);
  const auto labels = social::labels_for(detect::load_scores(a.scores), joined.model_id);
  const auto pairs = social::join_articles(submissions, articles);

  std::string csv;
  std::string summary = "class,statistic,value,flags\n";
  const auto stat = [&](Reliability cls, const std::string& name, double v, const std::string& flags) {
    summary += std::string(to_string(cls)) + ',' + name + ',' + fixed(v, 6) + ',' + flags + '\n';
  };
  for (const auto cls : {Reliability::unreliable, Reliability::reliable}) {
    // Publication prevalence by month for the class, to correlate with shares.
    std::map<std::string, double> published;
    const prevalence::Group g{cls, std::nullopt};
    for (const auto& p : prevalence::monthly_prevalence(joined, {g})) {
      if (p.aggregation == prevalence::Aggregation::micro) published[p.period] = p.rate;
    }
    for (const auto w : {social::Weight::submissions, social::Weight::comments}) {
      const auto points = social::share_series(pairs, labels, sites, w, cls);
      csv += social::to_csv(points, cls, w, csv.empty());
      std::vector<double> x, y;
      for (const auto& pt : points) {
        if (const auto it = published.find(pt.month); it != published.end()) {
          x.push_back(it->second);
          y.push_back(pt.share);
        }
      }
      const std::string name = "pearson_" + std::string(to_string(w));
      if (x.size() < 3) {
        stat(cls, name, NAN, "too_few_months");
      } else {
        const auto r = social::pearson(x, y);
        stat(cls, name, r.undefined ? NAN : r.rho, r.undefined ? "undefined" : "");
      }
    }

    std::map<std::string, Reliability> site_class;
    for (const auto& s : sites) site_class[s.domain] = s.reliability;
    std::vector<social::Pair> in_class;
    for (const auto& p : pairs) {
      const auto it = site_class.find(p.domain);
      if (it != site_class.end() && it->second == cls && labels.count(p.article_id)) in_class.push_back(p);
    }
    std::vector<double> human, machine;
    std::map<std::string, std::vector<double>> machine_by_month;
    for (const auto& p : in_class) {
      const double c = static_cast<double>(p.submission.num_comments);
      if (labels.at(p.article_id) == Label::machine) {
        machine.push_back(c);
        machine_by_month[month_key(date_of(p.submission.created_at))].push_back(c);
      } else {
        human.push_back(c);
      }
    }
    try {
      const auto d = social::cohens_d_by_domain(in_class, labels);
      stat(cls, "cohens_d", d.d, d.zero_variance ? "zero_variance" : "");
      stat(cls, "centered_difference", d.centered_difference, "");
    } catch (const Error&) {
      stat(cls, "cohens_d", NAN, "no_domain_with_both_labels");
    }
    if (human.empty() || machine.empty()) {
      stat(cls, "mann_whitney_p", NAN, "empty_group");
    } else {
      const auto mw = social::mann_whitney(human, machine);
      stat(cls, "mann_whitney_u_human", mw.u_a, "");
      stat(cls, "mann_whitney_u_machine", mw.u_b, "");
      stat(cls, "mann_whitney_p", mw.p, mw.exact ? "exact" : "normal");
    }
    if (machine_by_month.size() < 2) {
      stat(cls, "log_change_comments_pct", NAN, "fewer_than_two_months");
    } else {
      const auto c = social::log_scale_change(machine_by_month.begin()->second, machine_by_month.rbegin()->second);
      stat(cls, "log_change_comments_pct", c.undefined ? NAN : c.pct, c.undefined ? "undefined" : "");
    }
  }
  write_output(a.out, csv);
  if (!a.summary_out.empty()) write_output(a.summary_out, summary);
  out << "lines=" << stats.lines << " records=" << stats.records << " malformed=" << stats.malformed
      << " out_of_window=" << stats.out_of_window << " pairs=" << pairs.size() << '\n'
      << summary;
  return kExitOk;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  std::string prevalence, adoption, social, out_dir;
};

double cell(const std::string& s) { return s.empty() ? NAN : std::stod(s); }

int report_cmd(const ReportArgs& a, std::ostream& out) {
  require_file(a.prevalence, "--prevalence");
  require_value(a.out_dir, "--out-dir");
  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  std::vector<std::string> written;
  const auto emit = [&](const std::string& name, const std::string& content) {
    write_file(dir / name, content);
    written.push_back(name);
  };

  {
    const auto content = read_file(a.prevalence);
    const auto rows = parse_csv(content);
    if (rows.empty()) throw ParseError("empty prevalence file", 0);
    const auto& h = rows.front();
    const auto c_period = csv_column(h, "period"), c_group = csv_column(h, "group"),
               c_agg = csv_column(h, "aggregation"), c_pct = csv_column(h, "pct"), c_lo = csv_column(h, "ci_low"),
               c_hi = csv_column(h, "ci_high");
    std::vector<std::string> group_order;
    std::set<std::string> periods;
    std::map<std::string, std::vector<std::size_t>> by_group;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() != h.size()) throw ParseError("row " + std::to_string(i + 1) + " has the wrong width", i + 1);
      const auto& g = rows[i][c_group];
      if (!by_group.count(g)) group_order.push_back(g);
      by_group[g].push_back(i);
      periods.insert(rows[i][c_period]);
    }
    const std::vector<std::string> x(periods.begin(), periods.end());
    const auto header_line = content.substr(0, content.find('\n') + 1);
    for (const auto& g : group_order) {
      plot::LineChart chart;
      chart.title = "Synthetic articles, " + g;
      chart.y_label = "% synthetic";
      chart.x = x;
      std::string csv = header_line;
      for (const auto* agg : {"micro", "macro"}) {
        plot::Series s{agg, std::vector<double>(x.size(), NAN), std::vector<double>(x.size(), NAN),
                       std::vector<double>(x.size(), NAN)};
        for (const auto i : by_group[g]) {
          const auto& r = rows[i];
          if (r[c_agg] != agg) continue;
          const auto k = static_cast<std::size_t>(std::lower_bound(x.begin(), x.end(), r[c_period]) - x.begin());
          s.y[k] = cell(r[c_pct]);
          s.low[k] = cell(r[c_lo]);
          s.high[k] = cell(r[c_hi]);
        }
        chart.series.push_back(std::move(s));
      }
      for (const auto i : by_group[g]) {
        std::string line;
        for (std::size_t c = 0; c < rows[i].size(); ++c) line += (c ? "," : "") + rows[i][c];
        csv += line + '\n';
      }
      const auto stem = "prevalence_" + file_stem_for(g);
      emit(stem + ".svg", plot::render_svg(chart));
      emit(stem + ".csv", csv);
    }
  }

  // Class series keyed by a period column, one line per class.
  const auto class_chart = [&](const std::string& content, const std::string& period_col, const std::string& value_col,
                               const std::string& title, const std::string& y_label,
                               const std::function<bool(const std::vector<std::string>&,
                                                        const std::vector<std::string>&)>& keep) {
    const auto rows = parse_csv(content);
    if (rows.empty()) throw ParseError("empty input for " + title, 0);
    const auto& h = rows.front();
    const auto c_period = csv_column(h, period_col), c_class = csv_column(h, "class"),
               c_value = csv_column(h, value_col);
    std::set<std::string> periods;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (keep(h, rows[i])) periods.insert(rows[i][c_period]);
    }
    plot::LineChart chart;
    chart.title = title;
    chart.y_label = y_label;
    chart.x.assign(periods.begin(), periods.end());
    for (const auto* cls : {"unreliable", "reliable"}) {
      plot::Series s{cls, std::vector<double>(chart.x.size(), NAN), {}, {}};
      for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r[c_class] != cls || !keep(h, r)) continue;
        const auto k = static_cast<std::size_t>(std::lower_bound(chart.x.begin(), chart.x.end(), r[c_period]) -
                                                chart.x.begin());
        s.y[k] = cell(r[c_value]);
      }
      chart.series.push_back(std::move(s));
    }
    return plot::render_svg(chart);
  };
  const auto all_rows = [](const auto&, const auto&) { return true; };

  if (!a.adoption.empty()) {
    require_file(a.adoption, "--adoption");
    const auto content = read_file(a.adoption);
    emit("adoption.svg", class_chart(content, "window_start", "count", "Sites publishing synthetic articles",
                                     "sites per 30-day window", all_rows));
    emit("adoption.csv", content);
  }
  if (!a.social.empty()) {
    require_file(a.social, "--social");
    const auto content = read_file(a.social);
    for (const auto* w : {"submissions", "comments"}) {
      const std::string weight = w;
      const auto keep = [weight](const std::vector<std::string>& h, const std::vector<std::string>& r) {
        return r[csv_column(h, "weight")] == weight;
      };
      emit("social_" + weight + ".svg", class_chart(content, "month", "pct", "Reddit " + weight + " on synthetic articles",
                                                    "% of " + weight, keep));
    }
    emit("social.csv", content);
  }
  for (const auto& w : written) out << (dir / w).string() << '\n';
  return kExitOk;
}

void apply_config(CLI::App& sub, const std::map<std::string, std::string>& config) {
  for (auto* opt : sub.get_options()) {
    const auto& name = opt->get_single_name();
    const auto it = config.find(name);
    if (it == config.end() || opt->count() > 0 || name == "help") continue;
    opt->add_result(it->second);
    opt->run_callback();
  }
}

}  // namespace

std::map<std::string, std::string> load_config(const fs::path& path) {
  if (!fs::exists(path)) throw Error("no such file: " + path.string());
  std::map<std::string, std::string> out;
  std::istringstream in(read_file(path));
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError(path.string() + ":" + std::to_string(n) + ": expected key=value");
    }
    const std::string key(trim(t.substr(0, eq)));
    if (!out.emplace(key, std::string(trim(t.substr(eq + 1)))).second) {
      throw UsageError(path.string() + ":" + std::to_string(n) + ": repeated key " + key);
    }
  }
  return out;
}

prevalence::Group parse_group(const std::string& name) {
  const auto slash = name.find('/');
  if (slash == std::string::npos) throw UsageError("group must look like class/stratum: " + name);
  const auto cls = name.substr(0, slash), stratum = name.substr(slash + 1);
  prevalence::Group g;
  try {
    if (cls != "ALL") g.reliability = parse_reliability(cls);
    if (stratum != "ALL") g.bucket = parse_crux_bucket(stratum);
  } catch (const Error&) {
    throw UsageError("unknown group: " + name);
  }
  return g;
}

std::string daily_csv(const prevalence::Joined& joined, const std::vector<prevalence::Group>& groups) {
  std::string out = "date,group,aggregation,n_articles,n_synthetic,n_sites,pct\n";
  for (const auto& g : groups) {
    for (const auto agg : {prevalence::Aggregation::micro, prevalence::Aggregation::macro}) {
      for (const auto& p : prevalence::daily_series(joined, g, agg)) {
        out += format_date(p.date) + ',' + prevalence::group_name(g) + ',' + std::string(prevalence::to_string(agg)) +
               ',' + std::to_string(p.n_articles) + ',' + std::to_string(p.n_synthetic) + ',' +
               std::to_string(p.n_sites) + ',' + pct4(p.rate) + '\n';
      }
    }
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic news measurement pipeline", "synthnews"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "flat key=value defaults (else $SYNTH_CONFIG)");

  std::vector<Command> commands;
  const auto add = [&](const std::string& name, const std::string& help) {
    commands.push_back({app.add_subcommand(name, help), {}, {}});
    return commands.back().app;
  };

  CrawlArgs crawl;
  {
    auto* s = add("crawl", "discover and fetch new articles for every site");
    s->add_option("--sites", crawl.sites, "sites.csv");
    s->add_option("--state-dir", crawl.state_dir, "per-domain crawl state");
    s->add_option("--out", crawl.out, "raw page directory");
    s->add_option("--interval-ms", crawl.interval_ms, "minimum spacing per domain")->check(CLI::PositiveNumber);
    s->add_option("--fixture-root", crawl.fixture_root, "serve <root>/<host>/<path> from disk");
    s->add_option("--connect-to", crawl.connect_to, "host:port to connect to for every site");
    s->add_option("--scheme", crawl.scheme, "http or https")->check(CLI::IsMember({"http", "https"}));
    s->add_option("--jobs", crawl.jobs, "domains crawled in parallel")->check(CLI::PositiveNumber);
    s->add_option("--now", crawl.now, "fetch timestamp (ISO 8601) for reproducible runs");
    s->add_option("--max-retries", crawl.max_retries, "attempts per URL");
    s->add_option("--timeout-ms", crawl.timeout_ms, "request timeout");
    s->add_option("--backoff-ms", crawl.backoff_ms, "first retry delay");
    s->add_option("--user-agent", crawl.user_agent, "User-Agent header");
    s->add_flag("--no-robots", crawl.no_robots, "ignore robots.txt");
    commands.back().snapshot_path = [&] { return inside(crawl.out); };
    commands.back().body = [&](std::ostream& o, std::ostream&) { return crawl_cmd(crawl, o); };
  }
  ExtractArgs extract;
  {
    auto* s = add("extract", "turn raw pages into article records");
    s->add_option("--in", extract.in, "raw page directory");
    s->add_option("--out", extract.out, "articles.jsonl");
    s->add_option("--jobs", extract.jobs, "worker threads")->check(CLI::PositiveNumber);
    commands.back().snapshot_path = [&] { return beside(extract.out); };
    commands.back().body = [&](std::ostream& o, std::ostream&) { return extract_cmd(extract, o); };
  }
  AugmentArgs augment;
  {
    auto* s = add("augment", "build perturbed and paraphrased dataset variants");
    s->add_option("--in", augment.in, "labeled baseline dataset (JSONL)");
    s->add_option("--out", augment.out, "labeled dataset with variant membership");
    s->add_option("--fill-url", augment.fill_url, "span-fill service base URL (identity fill when unset)");
    s->add_option("--paraphrase-url", augment.paraphrase_url, "paraphrase service base URL (identity when unset)");
    s->add_option("--seed", augment.seed, "mask planning seed");
    s->add_option("--subsample", augment.subsample, "fraction of survivors kept")->check(CLI::Range(0.0, 1.0));
    s->add_option("--concurrency", augment.concurrency, "requests in flight per service")->check(CLI::PositiveNumber);
    s->add_option("--timeout-ms", augment.timeout_ms, "request timeout");
    s->add_option("--prompts-from", augment.prompts_from, "articles.jsonl to build generation prompts from");
    s->add_option("--prompts-out", augment.prompts_out, "prompt JSONL");
    commands.back().snapshot_path = [&] { return beside(augment.out.empty() ? augment.prompts_out : augment.out); };
    commands.back().body = [&](std::ostream& o, std::ostream& e) { return augment_cmd(augment, o, e); };
  }
  TrainArgs train;
  {
    auto* s = add("train-baseline", "train the hashed n-gram logistic detector");
    s->add_option("--in", train.in, "labeled dataset (JSONL)");
    s->add_option("--out", train.out, "model file");
    s->add_option("--split", train.split, "train, test or all");
    s->add_option("--epochs", train.epochs, "passes over the data")->check(CLI::PositiveNumber);
    s->add_option("--learning-rate", train.learning_rate, "SGD step")->check(CLI::PositiveNumber);
    s->add_option("--seed", train.seed, "shuffle seed");
    commands.back().snapshot_path = [&] { return beside(train.out); };
    commands.back().body = [&](std::ostream& o, std::ostream&) { return train_cmd(train, o); };
  }
  ClassifyArgs classify;
  {
    auto* s = add("classify", "score every admitted article");
    s->add_option("--in", classify.in, "articles.jsonl");
    s->add_option("--model", classify.model, "baseline model file");
    s->add_option("--remote", classify.remote, "scoring service base URL");
    s->add_option("--model-id", classify.model_id, "model id recorded for remote scores");
    s->add_option("--tau", classify.tau, "machine threshold");
    s->add_option("--out", classify.out, "scores.jsonl (resumed when present)");
    s->add_option("--jobs", classify.jobs, "batches scored in parallel")->check(CLI::PositiveNumber);
    s->add_option("--batch-size", classify.batch_size, "texts per batch")->check(CLI::PositiveNumber);
    s->add_option("--timeout-ms", classify.timeout_ms, "request timeout");
    s->add_option("--now", classify.now, "scored_at timestamp (ISO 8601)");
    commands.back().snapshot_path = [&] { return beside(classify.out); };
    commands.back().body = [&](std::ostream& o, std::ostream& e) { return classify_cmd(classify, o, e); };
  }
  BenchArgs bench;
  {
    auto* s = add("bench", "score every model on every test set");
    s->add_option("--manifest", bench.manifest, "bench.json");
    s->add_option("--tau", bench.tau, "machine threshold");
    s->add_option("--out", bench.out, "bench.csv");
    s->add_option("--jobs", bench.jobs, "cells scored in parallel")->check(CLI::PositiveNumber);
    commands.back().snapshot_path = [&] { return beside(bench.out); };
    commands.back().body = [&](std::ostream& o, std::ostream&) { return bench_cmd(bench, o); };
  }
  PrevalenceArgs prev;
  {
    auto* s = add("prevalence", "monthly and daily synthetic-article rates");
    s->add_option("--articles", prev.articles, "articles.jsonl");
    s->add_option("--scores", prev.scores, "scores.jsonl");
    s->add_option("--sites", prev.sites, "sites.csv");
    s->add_option("--model-id", prev.model_id, "model to use when scores hold several");
    s->add_option("--out", prev.out, "monthly prevalence CSV");
    s->add_option("--daily-out", prev.daily_out, "daily series CSV for its");
    s->add_option("--adoption-out", prev.adoption_out, "30-day adoption counts CSV");
    s->add_option("--top-month", prev.top_month, "YYYY-MM for the top-site table");
    s->add_option("--top-out", prev.top_out, "top-site CSV");
    s->add_option("--top-k", prev.top_k, "rows in the top-site table")->check(CLI::PositiveNumber);
    s->add_option("--min-articles", prev.min_articles, "article floor for top sites");
    commands.back().snapshot_path = [&] { return beside(prev.out); };
    commands.back().body = [&](std::ostream& o, std::ostream&) { return prevalence_cmd(prev, o); };
  }
  ItsArgs its_args;
  {
    auto* s = add("its", "interrupted time series fits per class and stratum");
    s->add_option("--prevalence", its_args.prevalence, "daily series CSV from prevalence --daily-out");
    s->add_option("--intervention", its_args.intervention, "first post-intervention day");
    s->add_option("--out", its_args.out, "its.csv");
    s->add_option("--cadence", its_args.cadence, "days per bin");
    s->add_option("--gaps", its_args.gaps, "reject or interpolate missing days");
    s->add_option("--order", its_args.order, "auto or p,d,q");
    s->add_option("--aggregation", its_args.aggregation, "micro or macro");
    s->add_option("--jobs", its_args.jobs, "fits in parallel for a fixed order")->check(CLI::PositiveNumber);
    s->add_option("--max-iterations", its_args.max_iterations, "simplex iteration cap")->check(CLI::PositiveNumber);
    s->add_option("--hessian-step", its_args.hessian_step, "relative finite-difference step")
        ->check(CLI::PositiveNumber);
    commands.back().snapshot_path = [&] { return beside(its_args.out); };
    commands.back().body = [&](std::ostream& o, std::ostream& e) { return its_cmd(its_args, o, e); };
  }
  TopicsArgs topics_args;
  {
    auto* s = add("topics", "top synthetic-article topics for a month");
    s->add_option("--articles", topics_args.articles, "articles.jsonl");
    s->add_option("--scores", topics_args.scores, "scores.jsonl");
    s->add_option("--sites", topics_args.sites, "sites.csv");
    s->add_option("--model-id", topics_args.model_id, "model to use when scores hold several");
    s->add_option("--month", topics_args.month, "YYYY-MM");
    s->add_option("--out", topics_args.out, "topics.csv");
    s->add_option("--group", topics_args.groups, "class/stratum, repeatable");
    s->add_option("--lambda", topics_args.lambda, "DP-Means penalty (0: half the median squared distance)");
    s->add_option("--n", topics_args.n, "topics per group")->check(CLI::PositiveNumber);
    s->add_option("--keywords", topics_args.keywords, "keywords per topic")->check(CLI::PositiveNumber);
    s->add_option("--min-support", topics_args.min_support, "paragraphs a keyword needs");
    s->add_option("--embed-url", topics_args.embed_url, "embedding service base URL (hashed TF-IDF when unset)");
    s->add_option("--timeout-ms", topics_args.timeout_ms, "request timeout");
    s->add_option("--jobs", topics_args.jobs, "worker threads")->check(CLI::PositiveNumber);
    commands.back().snapshot_path = [&] { return beside(topics_args.out); };
    commands.back().body = [&](std::ostream& o, std::ostream&) { return topics_cmd(topics_args, o); };
  }
  SocialArgs social_args;
  {
    auto* s = add("social", "Reddit shares and engagement statistics");
    s->add_option("--dump", social_args.dump, "submission NDJSON");
    s->add_option("--articles", social_args.articles, "articles.jsonl");
    s->add_option("--scores", social_args.scores, "scores.jsonl");
    s->add_option("--sites", social_args.sites, "sites.csv");
    s->add_option("--model-id", social_args.model_id, "model to use when scores hold several");
    s->add_option("--out", social_args.out, "monthly share CSV");
    s->add_option("--summary-out", social_args.summary_out, "statistics CSV");
    s->add_option("--from", social_args.from, "first submission day (YYYY-MM-DD)");
    s->add_option("--to", social_args.to, "last submission day (YYYY-MM-DD)");
    s->add_option("--max-malformed", social_args.max_malformed, "tolerated fraction of bad lines")
        ->check(CLI::Range(0.0, 1.0));
    commands.back().snapshot_path = [&] { return beside(social_args.out); };
    commands.back().body = [&](std::ostream& o, std::ostream&) { return social_cmd(social_args, o); };
  }
  ReportArgs report;
  {
    auto* s = add("report", "SVG charts and their CSV data");
    s->add_option("--prevalence", report.prevalence, "monthly prevalence CSV");
    s->add_option("--adoption", report.adoption, "adoption CSV");
    s->add_option("--social", report.social, "social share CSV");
    s->add_option("--out-dir", report.out_dir, "output directory");
    commands.back().snapshot_path = [&] { return inside(report.out_dir); };
    commands.back().body = [&](std::ostream& o, std::ostream&) { return report_cmd(report, o); };
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err << "synthnews: " << e.what() << "\n" << app.help();
      return kExitUsage;
    }
    if (config_path.empty()) {
      if (const char* env = std::getenv("SYNTH_CONFIG"); env && *env) config_path = env;
    }
    const auto config = config_path.empty() ? std::map<std::string, std::string>{} : load_config(config_path);
    std::set<std::string> known;
    for (const auto& c : commands) {
      for (const auto* opt : c.app->get_options()) known.insert(opt->get_single_name());
    }
    for (const auto& [key, value] : config) {
      if (!known.count(key) || key == "help" || key == "config") throw UsageError("unknown config key: " + key);
    }
    for (auto& c : commands) {
      if (!c.app->parsed()) continue;
      try {
        apply_config(*c.app, config);
      } catch (const CLI::Error& e) {
        throw UsageError(std::string("config: ") + e.what());
      }
      const int code = c.body(out, err);
      if (const auto snap = c.snapshot_path(); !snap.empty() && code == kExitOk) write_output(snap, snapshot(*c.app));
      return code;
    }
    throw UsageError("no subcommand");
  } catch (const UsageError& e) {
    err << "synthnews: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "synthnews: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace synth::cli
