#include <benchmark/benchmark.h>

#include <string>

#include "tagtrace/injector.h"

namespace tagtrace {
namespace {

HttpExchange Page(size_t paragraphs) {
  HttpExchange x;
  x.url = "http://origin.example/";
  std::string body = "<html><head><title>t</title></head><body>";
  for (size_t i = 0; i < paragraphs; ++i) body += "<p>lorem ipsum dolor</p>\n";
  body += "</body></html>";
  x.response_headers = {{"Content-Type", "text/html"},
                        {"Content-Length", std::to_string(body.size())}};
  x.response_body = std::move(body);
  return x;
}

void BM_InjectHtml(benchmark::State& state) {
  HttpExchange x = Page(static_cast<size_t>(state.range(0)));
  Injector injector({});
  for (auto _ : state) {
    benchmark::DoNotOptimize(injector.Inject(x));
  }
  state.SetBytesProcessed(state.iterations() * x.response_body.size());
}
BENCHMARK(BM_InjectHtml)->Arg(10)->Arg(1000)->Arg(50000);

void BM_PassThroughImage(benchmark::State& state) {
  HttpExchange x;
  x.response_headers = {{"Content-Type", "image/jpeg"}};
  x.response_body.assign(64 * 1024, 'x');
  Injector injector({});
  for (auto _ : state) {
    benchmark::DoNotOptimize(injector.Inject(x));
  }
}
BENCHMARK(BM_PassThroughImage);

void BM_DynamicLabel(benchmark::State& state) {
  uint64_t n = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(DynamicLabel(n++, 42));
  }
}
BENCHMARK(BM_DynamicLabel);

}  // namespace
}  // namespace tagtrace
