// Copyright 2026 The bayeshift Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <filesystem>

#include <gtest/gtest.h>

#include "bayeshift/io.hpp"

using namespace bayeshift;

namespace {

int parse_error_line(const std::function<void()>& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e.line();
  }
  return -1;
}

}  // namespace

TEST(CountsCsv, ParsesWithComments) {
  const CountData d = parse_counts_csv("# two classes\n900,100\n100,900\n\n6600,3400\n");
  EXPECT_EQ(d.K(), 2);
  EXPECT_EQ(d.source_counts(0, 0), 900);
  EXPECT_EQ(d.source_counts(1, 0), 100);
  EXPECT_EQ(d.source_totals[1], 1000);
  EXPECT_EQ(d.target_counts[1], 3400);
}

TEST(CountsCsv, ErrorsCarryLineNumbers) {
  EXPECT_EQ(parse_error_line([] { parse_counts_csv("1,2\n3,x\n5,6\n"); }), 2);
  EXPECT_EQ(parse_error_line([] { parse_counts_csv("1,2\n3,4\n5,6,7\n"); }), 3);
  EXPECT_EQ(parse_error_line([] { parse_counts_csv("# c\n1,2\n3,-4\n5,6\n"); }), 3);
  EXPECT_EQ(parse_error_line([] { parse_counts_csv("1,2\n3,4\n5,6\n7,8\n"); }), 4);
  EXPECT_THROW(parse_counts_csv("1,2\n3,4\n"), ParseError);
  EXPECT_THROW(parse_counts_csv("1,2\n3,4.5\n5,6\n"), ParseError);
}

TEST(CountsCsv, RoundTrip) {
  Matrix S(3, 3);
  S << 5, 1, 0, 2, 7, 1, 0, 3, 9;
  Vector t(3);
  t << 4, 10, 2;
  const CountData d = CountData::make(S, t);
  const CountData back = parse_counts_csv(counts_to_csv(d));
  EXPECT_EQ(back.source_counts, d.source_counts);
  EXPECT_EQ(back.target_counts, d.target_counts);
  const CountData bj = parse_counts_json(counts_to_json(d).dump());
  EXPECT_EQ(bj.source_counts, d.source_counts);
  EXPECT_EQ(bj.target_counts, d.target_counts);
}

TEST(CountsJson, Rejects) {
  EXPECT_THROW(parse_counts_json("{"), ParseError);
  EXPECT_THROW(parse_counts_json(R"({"source_counts": [[1,2],[3,4]]})"), ParseError);
  EXPECT_THROW(parse_counts_json(R"({"source_counts": [[1,2],[3,4]], "target_counts": [1.5, 2]})"),
               ParseError);
  EXPECT_THROW(parse_counts_json(R"({"source_counts": [[1,2]], "target_counts": [1, 2]})"),
               ParseError);
}

TEST(EmbeddingsCsv, HeaderAndRows) {
  const ClassEmbeddings e = parse_embeddings_csv("label,a,b\ncat,1,0\ndog,0,1\nfox,0.5,0.5\n");
  ASSERT_EQ(e.labels.size(), 3u);
  EXPECT_EQ(e.labels[1], "dog");
  EXPECT_EQ(e.vectors.cols(), 2);
  EXPECT_DOUBLE_EQ(e.vectors(2, 0), 0.5);
}

TEST(EmbeddingsCsv, ErrorsCarryLineNumbers) {
  EXPECT_EQ(parse_error_line([] { parse_embeddings_csv("label,e0,e1\na,0.0,1.0\nb,1.0,oops\n"); }),
            3);
  EXPECT_EQ(parse_error_line([] { parse_embeddings_csv("a,1,2\nb,3\n"); }), 2);
  EXPECT_THROW(parse_embeddings_csv("a,1,2\n"), ParseError);
  try {
    parse_embeddings_csv("a,1\nb,nan\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(EmbeddingsJson, Parses) {
  const ClassEmbeddings e =
      parse_embeddings_json(R"([{"label":"a","vector":[1,2]},{"label":"b","vector":[3,4]}])");
  EXPECT_EQ(e.labels[0], "a");
  EXPECT_DOUBLE_EQ(e.vectors(1, 1), 4.0);
  EXPECT_THROW(parse_embeddings_json(R"([{"label":"a","vector":[1,2]},{"label":"b","vector":[3]}])"),
               ParseError);
  EXPECT_THROW(parse_embeddings_json(R"([{"label":"a","vector":[1]}])"), ParseError);
}

TEST(GraphJson, RoundTrip) {
  const LabelGraph g = cycle_graph(5, 0.5);
  const LaplacianMatrix lap = laplacian(g);
  const json j = graph_to_json(g, lap, {"a", "b", "c", "d", "e"});
  EXPECT_EQ(j["K"], 5);
  EXPECT_EQ(j["edges"].size(), 5u);
  EXPECT_NEAR(j["lambda2"].get<double>(), lap.lambda2, 1e-15);
  const LabelGraph back = parse_graph_json(j.dump());
  EXPECT_LT((back.W - g.W).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GraphJson, IdentityFallbackAndErrors) {
  const LabelGraph g = parse_graph_json(R"({"K": 4, "identity_fallback": true})");
  EXPECT_TRUE(g.identity_fallback);
  EXPECT_THROW(parse_graph_json(R"({"K": 3, "edges": [[0, 3, 1.0]]})"), ParseError);
  EXPECT_THROW(parse_graph_json(R"({"K": 3, "edges": [[0, 1]]})"), ParseError);
  EXPECT_THROW(parse_graph_json(R"({"edges": []})"), ParseError);
}

TEST(Json, NonFiniteBecomesNull) {
  EXPECT_TRUE(finite_or_null(std::nan("")).is_null());
  EXPECT_EQ(finite_or_null(2.5).get<double>(), 2.5);
}

TEST(Manifest, SidecarKeepsWallClockOut) {
  const auto dir = std::filesystem::temp_directory_path() / "bayeshift_io_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "out.json").string();
  RunManifest m;
  m.command = "estimate";
  m.seed = 7;
  m.outputs = {path};
  const json mj = m.to_json();
  EXPECT_FALSE(mj.contains("wall_clock_ms"));
  EXPECT_EQ(mj["version"], kVersion);
  write_run_sidecar(path, m, 12.5, json{{"bbse", 1.0}});
  const json side = json::parse(read_text_file(path + ".run.json"));
  EXPECT_EQ(side["seed"], 7);
  EXPECT_EQ(side["wall_clock_ms"], 12.5);
  EXPECT_EQ(side["timings_ms"]["bbse"], 1.0);
  EXPECT_EQ(side["started_utc"].get<std::string>().size(), 20u);
  std::filesystem::remove_all(dir);
}

TEST(Files, MissingFileThrows) {
  EXPECT_THROW(read_text_file("/nonexistent/bayeshift/file.csv"), Error);
}

TEST(FlowCsv, Columns) {
  FlowTrajectory t;
  t.states.push_back({SimplexVector::uniform(2), 0.0, 1.0});
  const std::string csv = flow_to_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,q0,q1,F");
}
