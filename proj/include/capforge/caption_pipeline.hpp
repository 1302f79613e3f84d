#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "capforge/backend_client.hpp"
#include "capforge/core_types.hpp"

namespace capforge {

struct SelectionResult {
  ViewCaption chosen;
  int chosen_sample_index = 0;
  std::vector<std::pair<CandidateCaption, double>> rejected;
};

/// dot(a,b) / (|a| |b|), clamped to [-1, 1].
/// Throws Error(dim_mismatch) or Error(zero_vector).
auto cosine_similarity(std::span<const double> a, std::span<const double> b) -> double;
auto cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) -> double;

/// Picks the candidate whose text embedding is most cosine-similar to the
/// image embedding. Exact ties go to the earliest candidate.
auto select_caption(const std::vector<CandidateCaption>& candidates, const EmbeddingVector& image_emb,
                    const std::vector<EmbeddingVector>& text_embs) -> SelectionResult;

inline constexpr std::string_view kCaptionsPlaceholder = "{captions}";
inline constexpr std::string_view kObjectPlaceholder = "<object>";

/// Substitutes the captions, joined with ", ", for every `{captions}` in the
/// template. Throws Error(bad_template) without a placeholder and
/// Error(no_candidates) for an empty caption list.
auto build_summary_prompt(const std::vector<std::string>& captions, std::string_view prompt_template) -> std::string;

/// Second QA question for a first-stage answer.
auto build_qa_followup(std::string_view prompt_template, std::string_view object) -> std::string;

/// Trim, collapse line breaks into single spaces, then strip one layer of
/// matching surrounding quotes.
auto normalize_summary_text(std::string_view text) -> std::string;

struct Consolidation {
  FinalCaption caption;
  TokenUsage usage;
  std::string prompt;
};

/// Summarizes the selected view captions into one object caption.
/// Propagates SummarizerRefused; callers route it to review.
auto consolidate(const std::string& uid, const std::vector<ViewCaption>& selected, SummarizerClient& summarizer,
                 const PipelineConfig& config, CaptionMode mode = CaptionMode::STANDARD) -> Consolidation;

struct ViewCandidates {
  int view_index = 0;
  std::vector<CandidateCaption> candidates;
  /// QA only: the first-stage answer substituted into the second question.
  std::string qa_object;
  /// QA only: the first stage came back empty and the view was captioned
  /// the standard way instead.
  bool qa_fallback = false;
};

/// N nucleus-sampled captions for one view.
auto caption_view(const ImageRef& image, int view_index, CaptionerClient& captioner, const PipelineConfig& config)
    -> ViewCandidates;

/// Two-stage QA for one view. An empty first-stage answer falls back to
/// caption_view and sets qa_fallback.
auto qa_caption_view(const ImageRef& image, int view_index, CaptionerClient& captioner, const PipelineConfig& config)
    -> ViewCandidates;

/// N nucleus-sampled captions per view.
auto caption_views(const std::vector<ImageRef>& images, CaptionerClient& captioner, const PipelineConfig& config)
    -> std::vector<ViewCandidates>;

/// Two-stage question answering per view: identify the object (one answer),
/// then ask for its structure and geometry (N answers).
auto qa_caption(const std::vector<ImageRef>& images, CaptionerClient& captioner, const PipelineConfig& config)
    -> std::vector<ViewCandidates>;

/// Embeds the view image and every candidate, then selects.
auto select_view(const ViewCandidates& view, const ImageRef& image, EmbedderClient& embedder) -> SelectionResult;

}  // namespace capforge
