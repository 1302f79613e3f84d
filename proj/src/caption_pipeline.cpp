#include "capforge/caption_pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>

namespace capforge {

namespace {

auto trim_view(std::string_view s) -> std::string_view
{
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

auto replace_all(std::string_view text, std::string_view needle, std::string_view replacement) -> std::string
{
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto hit = text.find(needle, pos);
    if (hit == std::string_view::npos) {
      out.append(text.substr(pos));
      return out;
    }
    out.append(text.substr(pos, hit - pos));
    out.append(replacement);
    pos = hit + needle.size();
  }
}

}  // namespace

auto cosine_similarity(std::span<const double> a, std::span<const double> b) -> double
{
  if (a.size() != b.size()) {
    throw Error(Errc::dim_mismatch, fmt::format("{} vs {}", a.size(), b.size()));
  }
  // Accumulated in extended precision.
  long double dot = 0.0L;
  long double na = 0.0L;
  long double nb = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double x = a[i];
    const long double y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (!(na > 0.0L) || !(nb > 0.0L)) {
    throw Error(Errc::zero_vector, "cosine similarity of a zero-norm vector");
  }
  return std::clamp(static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb))), -1.0, 1.0);
}

auto cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) -> double
{
  return cosine_similarity(a.view(), b.view());
}

auto select_caption(const std::vector<CandidateCaption>& candidates, const EmbeddingVector& image_emb,
                    const std::vector<EmbeddingVector>& text_embs) -> SelectionResult
{
  if (candidates.empty()) {
    throw Error(Errc::no_candidates, "nothing to select from");
  }
  if (candidates.size() != text_embs.size()) {
    throw Error(Errc::invalid_argument,
                fmt::format("{} candidates but {} embeddings", candidates.size(), text_embs.size()));
  }
  std::vector<double> scores(candidates.size());
  std::size_t best = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scores[i] = cosine_similarity(image_emb, text_embs[i]);
    if (scores[i] > scores[best]) {
      best = i;
    }
  }
  SelectionResult result;
  result.chosen = {candidates[best].text, candidates[best].view_index, scores[best]};
  result.chosen_sample_index = candidates[best].sample_index;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (i != best) {
      result.rejected.emplace_back(candidates[i], scores[i]);
    }
  }
  return result;
}

auto build_summary_prompt(const std::vector<std::string>& captions, std::string_view prompt_template) -> std::string
{
  if (prompt_template.find(kCaptionsPlaceholder) == std::string_view::npos) {
    throw Error(Errc::bad_template, "summary template lacks {captions}");
  }
  if (captions.empty()) {
    throw Error(Errc::no_candidates, "no captions to summarize");
  }
  std::string joined;
  for (const auto& c : captions) {
    if (!joined.empty()) {
      joined += ", ";
    }
    joined += c;
  }
  return replace_all(prompt_template, kCaptionsPlaceholder, joined);
}

auto build_qa_followup(std::string_view prompt_template, std::string_view object) -> std::string
{
  if (prompt_template.find(kObjectPlaceholder) == std::string_view::npos) {
    throw Error(Errc::bad_template, "QA follow-up template lacks <object>");
  }
  return replace_all(prompt_template, kObjectPlaceholder, object);
}

auto normalize_summary_text(std::string_view text) -> std::string
{
  std::string flat;
  flat.reserve(text.size());
  bool in_break = false;
  for (const char c : trim_view(text)) {
    if (c == '\n' || c == '\r') {
      if (!in_break) {
        // drop spaces before the break so "a \n b" becomes "a b"
        while (!flat.empty() && (flat.back() == ' ' || flat.back() == '\t')) {
          flat.pop_back();
        }
        flat.push_back(' ');
      }
      in_break = true;
      continue;
    }
    if (in_break && (c == ' ' || c == '\t')) {
      continue;
    }
    in_break = false;
    flat.push_back(c);
  }
  std::string_view v = trim_view(flat);
  static constexpr std::array<std::pair<std::string_view, std::string_view>, 4> quotes{{
      {"\"", "\""}, {"'", "'"}, {"\xE2\x80\x9C", "\xE2\x80\x9D"}, {"\xE2\x80\x98", "\xE2\x80\x99"}}};
  for (const auto& [open, close] : quotes) {
    if (v.size() >= open.size() + close.size() && v.starts_with(open) && v.ends_with(close)) {
      v = trim_view(v.substr(open.size(), v.size() - open.size() - close.size()));
      break;
    }
  }
  return std::string(v);
}

auto consolidate(const std::string& uid, const std::vector<ViewCaption>& selected, SummarizerClient& summarizer,
                 const PipelineConfig& config, CaptionMode mode) -> Consolidation
{
  if (selected.empty()) {
    throw Error(Errc::no_candidates, uid + ": no selected captions to consolidate");
  }
  std::vector<std::string> texts;
  texts.reserve(selected.size());
  for (const auto& v : selected) {
    texts.push_back(v.text);
  }
  Consolidation out;
  out.prompt = build_summary_prompt(texts, config.summary_prompt_template);
  auto response = summarizer.summarize(out.prompt);
  out.usage = response.usage;
  out.caption.uid = uid;
  out.caption.text = normalize_summary_text(response.text);
  if (out.caption.text.empty()) {
    throw Error(Errc::protocol_violation, uid + ": summary is empty after normalization");
  }
  out.caption.source_view_captions = selected;
  out.caption.mode = mode;
  return out;
}

auto caption_view(const ImageRef& image, int view_index, CaptionerClient& captioner, const PipelineConfig& config)
    -> ViewCandidates
{
  ViewCandidates view;
  view.view_index = view_index;
  const auto texts = captioner.caption_image(image, config.samples_per_view, SamplingParams{config.nucleus_p});
  for (std::size_t s = 0; s < texts.size(); ++s) {
    view.candidates.push_back({texts[s], view_index, static_cast<int>(s)});
  }
  return view;
}

auto qa_caption_view(const ImageRef& image, int view_index, CaptionerClient& captioner, const PipelineConfig& config)
    -> ViewCandidates
{
  if (!config.qa_mode) {
    throw Error(Errc::invalid_argument, "qa_caption requires qa_mode");
  }
  const SamplingParams sampling{config.nucleus_p};
  const auto object = std::string(trim_view(captioner.qa(image, config.qa_prompt_1, sampling)));
  if (object.empty()) {
    auto view = caption_view(image, view_index, captioner, config);
    view.qa_fallback = true;
    return view;
  }
  ViewCandidates view;
  view.view_index = view_index;
  view.qa_object = object;
  const auto texts = captioner.qa(image, build_qa_followup(config.qa_prompt_2, object), config.samples_per_view, sampling);
  for (std::size_t s = 0; s < texts.size(); ++s) {
    view.candidates.push_back({texts[s], view_index, static_cast<int>(s)});
  }
  return view;
}

auto caption_views(const std::vector<ImageRef>& images, CaptionerClient& captioner, const PipelineConfig& config)
    -> std::vector<ViewCandidates>
{
  std::vector<ViewCandidates> views;
  views.reserve(images.size());
  for (std::size_t v = 0; v < images.size(); ++v) {
    views.push_back(caption_view(images[v], static_cast<int>(v), captioner, config));
  }
  return views;
}

auto qa_caption(const std::vector<ImageRef>& images, CaptionerClient& captioner, const PipelineConfig& config)
    -> std::vector<ViewCandidates>
{
  std::vector<ViewCandidates> views;
  views.reserve(images.size());
  for (std::size_t v = 0; v < images.size(); ++v) {
    views.push_back(qa_caption_view(images[v], static_cast<int>(v), captioner, config));
  }
  return views;
}

auto select_view(const ViewCandidates& view, const ImageRef& image, EmbedderClient& embedder) -> SelectionResult
{
  const auto image_emb = embedder.embed_image(image);
  std::vector<EmbeddingVector> text_embs;
  text_embs.reserve(view.candidates.size());
  for (const auto& c : view.candidates) {
    text_embs.push_back(embedder.embed_text(c.text));
  }
  return select_caption(view.candidates, image_emb, text_embs);
}

}  // namespace capforge
